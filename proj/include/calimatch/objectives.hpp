#pragma once

// Loss terms of the training objective. Each loss is a pure function of model
// outputs and returns its value together with the gradient with respect to
// the probability views it reads. `to_logit_grad` turns view gradients into
// gradients on the logits and temperatures, which `backward` then consumes.

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "calimatch/model.hpp"

namespace calimatch {

inline constexpr double kProbFloor = 1e-7;

enum class Reduction { mean, sum };

/// Which terms compete in the min of the OOD calibration loss.
///   verbatim      - all K weighted terms, exactly as the formula is written
///   hard_negative - only the non-true classes, mirroring the OOD loss
enum class OcalMinMode { verbatim, hard_negative };

std::string to_string(Reduction r);
Reduction reduction_from_string(const std::string& name);
std::string to_string(OcalMinMode m);
OcalMinMode ocal_min_mode_from_string(const std::string& name);

/// d loss / d view. Empty matrices mean the view is not read.
struct ViewGrad {
  Matrix p;
  Matrix q;
  Matrix p_s;
  Matrix q_s;

  /// this += scale * other, allocating views on first use.
  void accumulate(const ViewGrad& other, double scale);
  bool empty() const noexcept { return p.empty() && q.empty() && p_s.empty() && q_s.empty(); }
};

struct LossTerm {
  double value = 0.0;
  ViewGrad grad;
};

/// Loss over two forward passes of the same samples.
struct PairLossTerm {
  double value = 0.0;
  ViewGrad first;
  ViewGrad second;
};

/// Chain rule from the views to z_f, z_g, t_m and t_o.
LogitGrad to_logit_grad(const ModelOutputs& out, const ViewGrad& grad);

/// Class indices from a one-hot matrix; throws ValidationError otherwise.
std::vector<int> labels_from_one_hot(const Matrix& one_hot);
Matrix one_hot(std::span<const int> labels, int num_classes);

double clamped_log(double x) noexcept;

// -sum_i log p_{y_i}
LossTerm loss_ce(const ModelOutputs& out, std::span<const int> labels,
                 Reduction reduction = Reduction::mean);

// -sum_i [ log q_{y_i} + min_{l != y_i} log(1 - q_l) ]
LossTerm loss_ood(const ModelOutputs& out, std::span<const int> labels,
                  Reduction reduction = Reduction::mean);

// sum_i sum_k (q_k(view1) - q_k(view2))^2
PairLossTerm loss_soft_consistency(const ModelOutputs& view1, const ModelOutputs& view2,
                                   Reduction reduction = Reduction::mean);

// Adaptive label smoothing on p_s: true class gets gamma_i, the rest share 1 - gamma_i.
LossTerm loss_mcal(const ModelOutputs& out, std::span<const int> labels,
                   std::span<const double> gammas, Reduction reduction = Reduction::mean);

// Adaptive label smoothing on q_s with a min over weighted log(1 - q_s) terms.
LossTerm loss_ocal(const ModelOutputs& out, std::span<const int> labels,
                   std::span<const double> deltas, Reduction reduction = Reduction::mean,
                   OcalMinMode mode = OcalMinMode::verbatim);

/// Pseudo-label cross-entropy on the strong view for masked samples. The
/// weak view only supplies argmax p and receives no gradient. Mean reduction
/// divides by the full unlabeled batch size.
LossTerm loss_fix(const ModelOutputs& weak, const ModelOutputs& strong,
                  const std::vector<bool>& mask, Reduction reduction = Reduction::mean);

/// Values of every term for one step; terms gated off are empty.
struct LossBreakdown {
  double l_ce = 0.0;
  std::optional<double> l_ood;
  std::optional<double> l_sc;
  std::optional<double> l_mcal;
  std::optional<double> l_ocal;
  std::optional<double> l_fix;
  double lambda_o = 0.0;
  double lambda_ocal = 0.0;
  double lambda_s = 0.0;
  double total = 0.0;

  /// L_CE + lambda_o L_OOD + lambda_s L_SC + L_MCal + lambda_ocal L_OCal + L_Fix
  double weighted_total() const noexcept;
};

}  // namespace calimatch
