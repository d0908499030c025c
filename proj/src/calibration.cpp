#include "calimatch/calibration.hpp"

#include <algorithm>
#include <cmath>

#include "calimatch/error.hpp"

namespace calimatch {

std::size_t confidence_bin(double confidence, int bins) {
  if (bins < 1) throw ConfigError("bin count must be at least 1");
  const double m_count = static_cast<double>(bins);
  int m = static_cast<int>(std::ceil(confidence * m_count));
  m = std::clamp(m, 1, bins);
  // Snap to the edge comparison so boundary values land where (m-1)/M < c <= m/M says.
  while (m > 1 && confidence <= static_cast<double>(m - 1) / m_count) --m;
  while (m < bins && confidence > static_cast<double>(m) / m_count) ++m;
  return static_cast<std::size_t>(m - 1);
}

std::size_t ReferenceTable::total_count() const noexcept {
  std::size_t n = 0;
  for (auto c : counts) n += c;
  return n;
}

std::size_t ReferenceTable::populated_bins() const noexcept {
  return static_cast<std::size_t>(std::count_if(counts.begin(), counts.end(),
                                                [](std::size_t c) { return c > 0; }));
}

ReferenceTable build_reference_table(std::span<const double> confidences,
                                     const std::vector<bool>& correct, int bins) {
  if (bins < 1) throw ConfigError("reference table needs at least one bin");
  if (confidences.empty()) throw ValidationError("reference table needs at least one sample");
  if (confidences.size() != correct.size())
    throw ValidationError("confidence and correctness lists differ in length");

  ReferenceTable table;
  table.bins = bins;
  table.edges.resize(static_cast<std::size_t>(bins) + 1);
  for (int m = 0; m <= bins; ++m)
    table.edges[static_cast<std::size_t>(m)] = static_cast<double>(m) / bins;
  table.counts.assign(static_cast<std::size_t>(bins), 0);
  std::vector<std::size_t> hits(static_cast<std::size_t>(bins), 0);

  std::size_t total_hits = 0;
  for (std::size_t i = 0; i < confidences.size(); ++i) {
    const double c = confidences[i];
    if (!(c >= 0.0 && c <= 1.0))
      throw DomainError("confidence " + std::to_string(c) + " outside [0, 1]");
    const auto b = confidence_bin(c, bins);
    ++table.counts[b];
    if (correct[i]) {
      ++hits[b];
      ++total_hits;
    }
  }
  table.fallback = static_cast<double>(total_hits) / static_cast<double>(confidences.size());
  table.values.resize(static_cast<std::size_t>(bins));
  for (std::size_t b = 0; b < table.values.size(); ++b)
    table.values[b] = table.counts[b] == 0
                          ? table.fallback
                          : static_cast<double>(hits[b]) / static_cast<double>(table.counts[b]);
  return table;
}

double lookup_reference(const ReferenceTable& table, double confidence) {
  if (!(confidence >= 0.0 && confidence <= 1.0))
    throw DomainError("confidence " + std::to_string(confidence) + " outside [0, 1]");
  return table.values[confidence_bin(confidence, table.bins)];
}

std::pair<std::vector<double>, std::vector<bool>> max_confidence(const Matrix& probs,
                                                                 std::span<const int> labels) {
  std::vector<double> conf(probs.rows());
  std::vector<bool> correct(probs.rows());
  for (std::size_t r = 0; r < probs.rows(); ++r) {
    auto row = probs.row(r);
    const auto arg = std::max_element(row.begin(), row.end()) - row.begin();
    conf[r] = row[static_cast<std::size_t>(arg)];
    correct[r] = static_cast<int>(arg) == labels[r];
  }
  return {std::move(conf), std::move(correct)};
}

ReferenceTables refresh_tables(const ModelParams& params, const Matrix& x,
                               std::span<const int> labels, int bins, Exec exec) {
  if (x.rows() == 0) throw ValidationError("validation set is empty");
  if (labels.size() != x.rows()) throw ValidationError("validation labels do not match features");
  for (int y : labels)
    if (y < 0 || y >= params.arch.num_classes)
      throw ValidationError("validation label " + std::to_string(y) + " is not a seen class");
  const ModelOutputs out = predict(params, x, exec);
  auto [p_conf, p_correct] = max_confidence(out.p, labels);
  auto [q_conf, q_correct] = max_confidence(out.q, labels);
  return {build_reference_table(p_conf, p_correct, bins),
          build_reference_table(q_conf, q_correct, bins)};
}

}  // namespace calimatch
