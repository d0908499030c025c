#pragma once

// Empirical checks of the selection-error bound and the gradient-alignment
// bound between the pseudo-label loss and the ideal true-label loss.

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include <json.hpp>

#include "calimatch/model.hpp"
#include "calimatch/selection.hpp"

namespace calimatch {

/// Selected unlabeled samples (the reliable subset) with their hidden truth.
struct SelectedBatch {
  Matrix strong;  // strong views, one row per selected sample
  std::vector<int> pseudo_labels;
  std::vector<int> true_labels;
  std::vector<bool> seen;

  std::size_t size() const noexcept { return pseudo_labels.size(); }
};

/// Applies the gate on the weak view and keeps the strong views of the survivors.
SelectedBatch gather_selected(const ModelParams& params, const Matrix& weak, const Matrix& strong,
                              const HiddenTruth& truth, const SelectionGate& gate);

/// Flat gradient over ModelParams::weights of sum-reduced CE at the given labels.
std::vector<double> cross_entropy_gradient(const ModelParams& params, const Matrix& x,
                                           std::span<const int> labels);

/// Pseudo-label loss gradient over every selected sample (sum reduction).
std::vector<double> surrogate_gradient(const ModelParams& params, const SelectedBatch& batch);
/// True-label CE gradient over the seen members only; zero when there are none.
std::vector<double> ideal_gradient(const ModelParams& params, const SelectedBatch& batch);

struct AlignmentReport {
  std::size_t batch_size = 0;
  std::size_t n_ood = 0;
  std::size_t n_mislabeled = 0;
  double epsilon_hat = 0.0;
  double grad_diff_norm = 0.0;     // ||surrogate - ideal||
  double residual_sum_norm = 0.0;  // ||sum of per-sample residuals||
  double identity_gap = 0.0;       // ||(surrogate - ideal) - sum of residuals||
  std::vector<double> residual_norms;       // parameter space, erroneous samples
  std::vector<double> logit_residual_max;   // max-norm of the logit-space residual
  double b_hat = 0.0;  // max L2 norm of a logit-space residual
  double l_hat = 0.0;  // max spectral norm of dz/dtheta over the batch
  double bound = 0.0;  // l_hat * b_hat * epsilon_hat * |batch|
  bool bound_holds = true;
};

AlignmentReport alignment_report(const ModelParams& params, const SelectedBatch& batch);

/// Spectral norm of the logit Jacobian dz_f/dtheta for one input row.
double logit_jacobian_norm(const ModelParams& params, std::span<const double> x);

/// Score stream whose joint correctness (seen and correctly pseudo-labeled)
/// has accuracy min(s, c) - eta in every confidence bin.
struct CalibratedOracle {
  double eta = 0.0;
  std::uint64_t seed = 0;
};

struct OracleSample {
  double s = 0.0;
  double c = 0.0;
  bool error = false;
};

std::vector<OracleSample> draw_oracle(const CalibratedOracle& oracle, std::size_t n);

struct LemmaReport {
  double tau1 = 0.0;
  double tau2 = 0.0;
  double eta = 0.0;
  std::size_t n = 0;
  std::size_t n_selected = 0;
  std::optional<double> epsilon_hat;
  double bound = 0.0;      // 1 - min(tau1, tau2) + eta
  double allowance = 0.0;  // 3 sigma of a Bernoulli(bound) mean over n_selected
  bool violated = false;
};

double lemma_bound(double tau1, double tau2, double eta) noexcept;
LemmaReport lemma_check(const CalibratedOracle& oracle, double tau1, double tau2, std::size_t n);

nlohmann::json to_json(const AlignmentReport& report);
nlohmann::json to_json(const LemmaReport& report);

}  // namespace calimatch
