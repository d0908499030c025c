#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "calimatch/model.hpp"
#include "calimatch/objectives.hpp"

namespace calimatch {

enum class OptimizerKind { adam, sgd };

/// Training hyperparameters. JSON keys equal the field names.
struct TrainConfig {
  int epochs = 30;
  int iterations_per_epoch = 0;  // 0: ceil(n_unlabeled / batch_size_unlabeled)
  int warmup_epochs = 5;
  double learning_rate = 0.003;
  double lr_decay_factor = 0.2;
  int lr_decay_iteration = 0;  // 0: at 80% of the total iteration count
  OptimizerKind optimizer = OptimizerKind::adam;
  int batch_size_labeled = 50;
  int batch_size_unlabeled = 50;
  double lambda_o = 0.1;
  double lambda_ocal = 0.001;
  double lambda_s = 0.5;
  double tau1 = 0.5;
  double tau2 = 0.95;
  int bins = 30;
  int ece_bins = 15;
  std::uint64_t seed = 0;
  bool disable_mcal = false;
  bool disable_ocal = false;
  bool disable_ood_head = false;
  bool disable_fix = false;
  OcalMinMode ocal_min_mode = OcalMinMode::verbatim;
  Reduction reduction = Reduction::mean;
  std::vector<int> hidden_dims{64, 64};
  Activation activation = Activation::relu;
  double sigma_weak = 0.1;
  double sigma_strong = 0.4;
  double dropout = 0.2;
  int eval_period = 1;  // epochs between validation evaluations

  bool calibrates_classifier() const noexcept { return !disable_mcal; }
  bool operator==(const TrainConfig&) const = default;
};

std::string to_string(OptimizerKind k);

/// Every schema key with a one-line description; drives --help and the schema file.
const std::vector<std::pair<std::string, std::string>>& config_schema();

nlohmann::json to_json(const TrainConfig& config);
/// Strict parse: unknown keys, wrong types and out-of-range values are all
/// collected into a single SchemaError.
TrainConfig config_from_json(const nlohmann::json& doc);
/// Range and consistency checks on an in-memory config.
void validate(const TrainConfig& config);

/// Hex FNV-1a 64 over the canonical (sorted-key) JSON dump.
std::string config_hash(const TrainConfig& config);

/// calimatch, openmatch, fixmatch, supervised.
const std::vector<std::string>& preset_names();
/// Sets the ablation flags of a preset; ConfigError listing valid presets otherwise.
void apply_preset(TrainConfig& config, const std::string& preset);

nlohmann::json config_json_schema();

}  // namespace calimatch
