#include "calimatch/optimizer.hpp"

#include <cmath>

namespace calimatch {

Optimizer::Optimizer(OptimizerKind kind, std::size_t weight_count, double beta1, double beta2,
                     double epsilon)
    : kind_(kind), beta1_(beta1), beta2_(beta2), epsilon_(epsilon) {
  if (kind_ == OptimizerKind::adam) {
    m_.assign(weight_count + 2, 0.0);
    v_.assign(weight_count + 2, 0.0);
  }
}

void Optimizer::step(ModelParams& params, const ParamGrad& grad, double learning_rate) {
  ++t_;
  const std::size_t n = params.weights.size();
  auto coord = [&](std::size_t i) -> double& {
    return i < n ? params.weights[i] : (i == n ? params.t_m : params.t_o);
  };
  auto gradient = [&](std::size_t i) {
    return i < n ? grad.weights[i] : (i == n ? grad.t_m : grad.t_o);
  };

  if (kind_ == OptimizerKind::sgd) {
    for (std::size_t i = 0; i < n + 2; ++i) coord(i) -= learning_rate * gradient(i);
  } else {
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t i = 0; i < n + 2; ++i) {
      const double g = gradient(i);
      m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * g;
      v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * g * g;
      coord(i) -= learning_rate * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + epsilon_);
    }
  }
  params.clamp_temperatures();
}

}  // namespace calimatch
