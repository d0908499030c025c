#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include <json.hpp>

#include "calimatch/data.hpp"
#include "calimatch/model.hpp"

namespace calimatch {

inline constexpr int kDefaultEceBins = 15;
inline constexpr double kOodDecision = 0.5;

struct ReliabilityBin {
  double lo = 0.0;
  double hi = 0.0;
  std::size_t count = 0;
  double mean_confidence = 0.0;
  double accuracy = 0.0;
  double gap = 0.0;  // |accuracy - mean_confidence|
};

struct ReliabilityTable {
  std::vector<ReliabilityBin> bins;
  std::size_t total = 0;

  /// sum_b (count_b / total) * gap_b; empty bins contribute nothing.
  double ece() const noexcept;
};

struct EceResult {
  double ece = 0.0;
  ReliabilityTable table;
};

/// Equal-width binning over ((b-1)/B, b/B], confidence 0 in the first bin.
/// Bin indices are computed in parallel; accumulation is serial and ordered.
EceResult ece(std::span<const double> confidences, const std::vector<bool>& correct, int bins,
              Exec exec = Exec::parallel);

struct BinaryCounts {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
  std::size_t tn = 0;
};

/// 2TP / (2TP + FP + FN); empty when no positives exist and none are predicted.
std::optional<double> f1_score(const BinaryCounts& counts) noexcept;
BinaryCounts confusion(const std::vector<bool>& predicted_positive,
                       const std::vector<bool>& actual_positive);

struct SweepRow {
  double tau1 = 0.0;
  std::optional<double> accuracy;           // seen test samples with max(s, u) > tau1
  std::optional<double> f1;                 // unseen-positive F1 among max(s, u) > tau1
  std::optional<double> selected_fraction;  // seen test samples with max(s, u) > tau1
};

inline const std::vector<double>& default_sweep_taus() {
  static const std::vector<double> taus{0.5, 0.6, 0.7, 0.8};
  return taus;
}

struct EvalConfig {
  int ece_bins = kDefaultEceBins;
  bool calibrated = true;  // report p_s as the multiclass confidence, else p
  std::vector<double> sweep_taus = default_sweep_taus();
};

struct MetricsReport {
  bool calibrated = true;
  std::size_t n_seen_test = 0;
  std::size_t n_test = 0;
  double top1 = 0.0;
  double ece_multiclass = 0.0;  // on the reported confidence
  double ece_multiclass_p = 0.0;
  double ece_multiclass_ps = 0.0;
  std::optional<double> ood_f1;
  double ood_ece = 0.0;
  double t_m = 0.0;
  double t_o = 0.0;
  ReliabilityTable multiclass_table;
  ReliabilityTable ood_table;
  std::vector<SweepRow> sweep;
};

/// Classification metrics on the seen test samples, OOD metrics on the full
/// test split (unseen is the positive class, decision u > 0.5).
MetricsReport evaluate(const ModelParams& params, const MismatchDataset& data,
                       const EvalConfig& config = {}, Exec exec = Exec::parallel);

nlohmann::json to_json(const MetricsReport& report);

/// CSV: bin_lo,bin_hi,count,mean_confidence,accuracy,gap
void emit_reliability_data(const ReliabilityTable& table, const std::filesystem::path& path);
ReliabilityTable read_reliability_data(const std::filesystem::path& path);
void emit_sweep(std::span<const SweepRow> rows, const std::filesystem::path& path);

/// Writes report.json, reliability_multiclass.csv, reliability_ood.csv and sweep.csv.
void write_report(const MetricsReport& report, const std::filesystem::path& dir);

}  // namespace calimatch
