#pragma once

#include <cstddef>
#include <vector>

#include "calimatch/config.hpp"
#include "calimatch/model.hpp"

namespace calimatch {

/// First-order optimizer over every ModelParams field. Temperatures are
/// optimized as two extra coordinates and clamped after each step.
class Optimizer {
 public:
  Optimizer(OptimizerKind kind, std::size_t weight_count, double beta1 = 0.9,
            double beta2 = 0.999, double epsilon = 1e-8);

  void step(ModelParams& params, const ParamGrad& grad, double learning_rate);
  long steps() const noexcept { return t_; }

 private:
  OptimizerKind kind_;
  double beta1_;
  double beta2_;
  double epsilon_;
  long t_ = 0;
  std::vector<double> m_;  // weights followed by t_m, t_o
  std::vector<double> v_;
};

}  // namespace calimatch
