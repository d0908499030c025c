#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "calimatch/kernels.hpp"
#include "calimatch/matrix.hpp"

namespace calimatch {

inline constexpr double kInitialTemperature = 1.5;
inline constexpr double kMinTemperature = 0.05;
inline constexpr double kMaxTemperature = 10.0;

struct ModelArch {
  int input_dim = 2;
  std::vector<int> hidden_dims{32, 32};
  int num_classes = 6;
  Activation activation = Activation::relu;

  bool operator==(const ModelArch&) const = default;
};

std::string to_string(Activation act);
Activation activation_from_string(const std::string& name);

/// Offsets of one dense layer inside the flat weight vector.
struct DenseLayout {
  int in = 0;
  int out = 0;
  std::size_t weight_offset = 0;  // [out x in], row-major
  std::size_t bias_offset = 0;    // [out]
};

/// Encoder layers followed by the classifier head and the one-vs-rest head.
/// Both heads read the same encoder output.
struct ParamLayout {
  std::vector<DenseLayout> encoder;
  DenseLayout classifier;
  DenseLayout ood;
  std::size_t total = 0;

  static ParamLayout for_arch(const ModelArch& arch);
};

struct ModelParams {
  ModelArch arch;
  ParamLayout layout;
  std::vector<double> weights;
  double t_m = kInitialTemperature;
  double t_o = kInitialTemperature;

  explicit ModelParams(ModelArch a);

  void clamp_temperatures() noexcept;

  std::span<const double> layer_weights(const DenseLayout& l) const {
    return {weights.data() + l.weight_offset, static_cast<std::size_t>(l.in) * l.out};
  }
  std::span<const double> layer_bias(const DenseLayout& l) const {
    return {weights.data() + l.bias_offset, static_cast<std::size_t>(l.out)};
  }

  bool operator==(const ModelParams& other) const {
    return arch == other.arch && weights == other.weights && t_m == other.t_m && t_o == other.t_o;
  }
};

/// He-style uniform initialization from a seeded generator; temperatures start at 1.5.
ModelParams make_toy_model(std::uint64_t seed, int input_dim, const std::vector<int>& hidden_dims,
                           int num_classes, Activation act = Activation::relu);

/// The six per-sample views of one forward pass, one row per sample.
///   p   = softmax(z_f)        q   = sigmoid(z_g)
///   p_s = softmax(z_f / t_m)  q_s = softmax(z_g / t_o)
struct ModelOutputs {
  Matrix z_f;
  Matrix z_g;
  Matrix p;
  Matrix q;
  Matrix p_s;
  Matrix q_s;
  double t_m = 1.0;
  double t_o = 1.0;

  std::size_t batch_size() const noexcept { return z_f.rows(); }
  std::size_t num_classes() const noexcept { return z_f.cols(); }
};

/// Builds all views from raw logits. Throws NumericError naming the head when
/// any logit is non-finite.
ModelOutputs outputs_from_logits(Matrix z_f, Matrix z_g, double t_m, double t_o,
                                 Exec exec = Exec::parallel);

/// Forward pass with the activations kept for backprop.
struct ForwardPass {
  ModelOutputs outputs;
  std::vector<Matrix> activations;  // [0] = input, then one per encoder layer
};

ForwardPass forward(const ModelParams& params, const Matrix& x, Exec exec = Exec::parallel);
/// Outputs only; no activations retained.
ModelOutputs predict(const ModelParams& params, const Matrix& x, Exec exec = Exec::parallel);

/// Gradient of a scalar with respect to both logit matrices and both temperatures.
struct LogitGrad {
  Matrix d_zf;
  Matrix d_zg;
  double d_tm = 0.0;
  double d_to = 0.0;
};

/// Gradient over every ModelParams field; same layout as ModelParams::weights.
struct ParamGrad {
  std::vector<double> weights;
  double t_m = 0.0;
  double t_o = 0.0;

  ParamGrad() = default;
  explicit ParamGrad(std::size_t n) : weights(n, 0.0) {}
  ParamGrad& operator+=(const ParamGrad& other);
  double norm() const;
};

ParamGrad backward(const ModelParams& params, const ForwardPass& pass, const LogitGrad& grad,
                   Exec exec = Exec::parallel);

}  // namespace calimatch
