#pragma once

#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include "calimatch/matrix.hpp"
#include "calimatch/model.hpp"

namespace calimatch {

inline constexpr int kDefaultReferenceBins = 30;

/// Zero-based bin of `confidence` among `bins` equal-width half-open bins
/// ((m-1)/M, m/M]; confidence 0 goes to the first bin. Agrees exactly with a
/// comparison against the edges m/M.
std::size_t confidence_bin(double confidence, int bins);

/// Per-bin validation accuracy used as the smoothed target of the calibration losses.
struct ReferenceTable {
  int bins = 0;
  std::vector<double> edges;   // bins + 1 values, edges[m] = m / bins
  std::vector<double> values;  // accuracy per bin, fallback when empty
  std::vector<std::size_t> counts;
  double fallback = 0.0;       // overall accuracy

  std::size_t total_count() const noexcept;
  std::size_t populated_bins() const noexcept;
  bool operator==(const ReferenceTable&) const = default;
};

ReferenceTable build_reference_table(std::span<const double> confidences,
                                     const std::vector<bool>& correct, int bins);

/// Reference value of the bin holding `confidence`; DomainError outside [0, 1].
double lookup_reference(const ReferenceTable& table, double confidence);

struct ReferenceTables {
  ReferenceTable gamma;  // classifier: max_k p_k, argmax p == y
  ReferenceTable delta;  // OvR detector: max_k q_k, argmax q == y
};

/// Rebuilds both tables from the uncalibrated p and q on a labeled validation set.
ReferenceTables refresh_tables(const ModelParams& params, const Matrix& x,
                               std::span<const int> labels, int bins,
                               Exec exec = Exec::parallel);

/// Confidences and argmax-correctness for one probability view.
std::pair<std::vector<double>, std::vector<bool>> max_confidence(const Matrix& probs,
                                                                 std::span<const int> labels);

}  // namespace calimatch
