#pragma once

#include <optional>
#include <span>
#include <vector>

#include "calimatch/model.hpp"

namespace calimatch {

inline constexpr double kDefaultTau1 = 0.5;
inline constexpr double kDefaultTau2 = 0.95;
// Thresholds behind the learning-curve diagnostics.
inline constexpr double kHighConfidence = 0.95;
inline constexpr double kLowOod = 0.5;

struct SampleScore {
  double s = 0.0;  // seen-class score, sum_k p_s_k q_s_k
  double c = 0.0;  // confidence, max_k p_s_k
  double u = 1.0;  // OOD score, 1 - s
};

SampleScore score(const ModelOutputs& out, std::size_t row);

struct SelectionRecord {
  double s = 0.0;
  double c = 0.0;
  double u = 1.0;
  int pseudo_label = -1;  // argmax_k p_k on the weak view
  bool selected = false;
};

struct SelectionGate {
  double tau1 = kDefaultTau1;
  double tau2 = kDefaultTau2;
  /// When false only the confidence gate applies (no OOD head).
  bool use_seen_score = true;
};

/// selected <=> s > tau1 and c > tau2. ConfigError unless both thresholds lie in (0, 1).
std::vector<SelectionRecord> select_batch(const ModelOutputs& weak, const SelectionGate& gate,
                                          Exec exec = Exec::parallel);
std::vector<SelectionRecord> select_batch(const ModelOutputs& weak, double tau1, double tau2);

std::vector<bool> selection_mask(std::span<const SelectionRecord> records);

/// Hidden ground truth for unlabeled samples; evaluation only.
struct HiddenTruth {
  std::vector<int> labels;  // seen classes use model indices 0..K-1
  std::vector<bool> seen;
};

/// Learning-curve quantities. Empty optionals mark an empty denominator.
struct SelectionDiagnostics {
  std::size_t total = 0;
  std::size_t selected = 0;
  std::optional<double> pseudo_label_accuracy;      // over selected seen samples
  std::optional<double> seen_selected_fraction;     // selected among seen samples
  std::optional<double> unseen_in_confident;        // unseen among c > 0.95
  std::optional<double> unseen_in_confident_low_ood;  // unseen among c > 0.95 and u < 0.5
  std::optional<double> selection_error;            // epsilon-hat
};

SelectionDiagnostics selection_diagnostics(std::span<const SelectionRecord> records,
                                           const HiddenTruth& truth);

/// Fraction of selected samples that are unseen or carry a wrong pseudo-label.
std::optional<double> selection_error_rate(std::span<const SelectionRecord> records,
                                           const HiddenTruth& truth);

}  // namespace calimatch
