#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace calimatch {

// Each error category maps to one CLI exit status (see tools/calimatch.cpp).

/// Invalid configuration, shapes, or flag combinations.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A schema check that found one or more invalid fields; all are reported.
class SchemaError : public ConfigError {
 public:
  explicit SchemaError(std::vector<std::string> problems);
  const std::vector<std::string>& problems() const noexcept { return problems_; }

 private:
  std::vector<std::string> problems_;
};

/// Argument outside the mathematical domain of an operation.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Malformed input data (labels that are not one-hot, mismatched batches).
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Non-finite values produced during a computation.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Image-record ingestion could not satisfy the requested split.
class IngestionError : public IoError {
 public:
  using IoError::IoError;
};

}  // namespace calimatch
