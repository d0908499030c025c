#include "calimatch/model.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "calimatch/error.hpp"

namespace calimatch {

std::string to_string(Activation act) { return act == Activation::relu ? "relu" : "tanh"; }

Activation activation_from_string(const std::string& name) {
  if (name == "relu") return Activation::relu;
  if (name == "tanh") return Activation::tanh;
  throw ConfigError("unknown activation '" + name + "' (expected relu or tanh)");
}

ParamLayout ParamLayout::for_arch(const ModelArch& arch) {
  ParamLayout layout;
  std::size_t offset = 0;
  auto place = [&offset](int in, int out) {
    DenseLayout l{in, out, offset, 0};
    offset += static_cast<std::size_t>(in) * out;
    l.bias_offset = offset;
    offset += static_cast<std::size_t>(out);
    return l;
  };
  int in = arch.input_dim;
  for (int width : arch.hidden_dims) {
    layout.encoder.push_back(place(in, width));
    in = width;
  }
  layout.classifier = place(in, arch.num_classes);
  layout.ood = place(in, arch.num_classes);
  layout.total = offset;
  return layout;
}

namespace {

void check_arch(const ModelArch& arch) {
  if (arch.num_classes < 2) throw ConfigError("num_classes must be at least 2");
  if (arch.input_dim < 1) throw ConfigError("input_dim must be positive");
  if (arch.hidden_dims.empty()) throw ConfigError("hidden_dims must be nonempty");
  for (int w : arch.hidden_dims)
    if (w < 1) throw ConfigError("hidden layer widths must be positive");
}

}  // namespace

ModelParams::ModelParams(ModelArch a)
    : arch(std::move(a)), layout((check_arch(arch), ParamLayout::for_arch(arch))),
      weights(layout.total, 0.0) {}

void ModelParams::clamp_temperatures() noexcept {
  t_m = std::clamp(t_m, kMinTemperature, kMaxTemperature);
  t_o = std::clamp(t_o, kMinTemperature, kMaxTemperature);
}

ModelParams make_toy_model(std::uint64_t seed, int input_dim, const std::vector<int>& hidden_dims,
                           int num_classes, Activation act) {
  ModelParams params(ModelArch{input_dim, hidden_dims, num_classes, act});
  std::mt19937_64 rng(seed);
  auto fill = [&](const DenseLayout& l) {
    const double bound = act == Activation::relu ? std::sqrt(6.0 / l.in)
                                                 : std::sqrt(6.0 / (l.in + l.out));
    std::uniform_real_distribution<double> dist(-bound, bound);
    auto* w = params.weights.data() + l.weight_offset;
    for (std::size_t i = 0; i < static_cast<std::size_t>(l.in) * l.out; ++i) w[i] = dist(rng);
  };
  for (const auto& l : params.layout.encoder) fill(l);
  fill(params.layout.classifier);
  fill(params.layout.ood);
  return params;
}

ModelOutputs outputs_from_logits(Matrix z_f, Matrix z_g, double t_m, double t_o, Exec exec) {
  if (z_f.rows() != z_g.rows() || z_f.cols() != z_g.cols())
    throw ConfigError("classifier and OOD logits disagree in shape");
  auto check_finite = [](const Matrix& z, const char* head) {
    for (double v : z.flat())
      if (!std::isfinite(v)) throw NumericError(std::string("non-finite logits from ") + head);
  };
  check_finite(z_f, "classifier head");
  check_finite(z_g, "OOD head");
  if (!(t_m > 0.0) || !(t_o > 0.0)) throw DomainError("temperatures must be positive");

  ModelOutputs out;
  const std::size_t n = z_f.rows();
  const std::size_t k = z_f.cols();
  out.p = Matrix(n, k);
  out.p_s = Matrix(n, k);
  out.q = Matrix(n, k);
  out.q_s = Matrix(n, k);
  kernels::softmax_rows(z_f, 1.0, out.p, exec);
  kernels::softmax_rows(z_f, t_m, out.p_s, exec);
  kernels::sigmoid(z_g, out.q, exec);
  kernels::softmax_rows(z_g, t_o, out.q_s, exec);
  out.z_f = std::move(z_f);
  out.z_g = std::move(z_g);
  out.t_m = t_m;
  out.t_o = t_o;
  return out;
}

namespace {

Matrix dense(const ModelParams& params, const DenseLayout& l, const Matrix& x, Exec exec) {
  Matrix y(x.rows(), static_cast<std::size_t>(l.out));
  kernels::affine(x, params.layer_weights(l), params.layer_bias(l), y, exec);
  return y;
}

void check_input(const ModelParams& params, const Matrix& x) {
  if (x.rows() == 0) throw ConfigError("forward: empty batch");
  if (x.cols() != static_cast<std::size_t>(params.arch.input_dim))
    throw ConfigError("forward: input has " + std::to_string(x.cols()) + " features, model expects " +
                      std::to_string(params.arch.input_dim));
}

}  // namespace

ForwardPass forward(const ModelParams& params, const Matrix& x, Exec exec) {
  check_input(params, x);
  ForwardPass pass;
  pass.activations.reserve(params.layout.encoder.size() + 1);
  pass.activations.push_back(x);
  for (const auto& l : params.layout.encoder) {
    Matrix h = dense(params, l, pass.activations.back(), exec);
    kernels::activate(h, params.arch.activation, exec);
    pass.activations.push_back(std::move(h));
  }
  const Matrix& features = pass.activations.back();
  pass.outputs = outputs_from_logits(dense(params, params.layout.classifier, features, exec),
                                     dense(params, params.layout.ood, features, exec), params.t_m,
                                     params.t_o, exec);
  return pass;
}

ModelOutputs predict(const ModelParams& params, const Matrix& x, Exec exec) {
  check_input(params, x);
  Matrix h = x;
  for (const auto& l : params.layout.encoder) {
    h = dense(params, l, h, exec);
    kernels::activate(h, params.arch.activation, exec);
  }
  return outputs_from_logits(dense(params, params.layout.classifier, h, exec),
                             dense(params, params.layout.ood, h, exec), params.t_m, params.t_o,
                             exec);
}

ParamGrad& ParamGrad::operator+=(const ParamGrad& other) {
  if (weights.empty()) weights.assign(other.weights.size(), 0.0);
  for (std::size_t i = 0; i < weights.size(); ++i) weights[i] += other.weights[i];
  t_m += other.t_m;
  t_o += other.t_o;
  return *this;
}

double ParamGrad::norm() const {
  double acc = t_m * t_m + t_o * t_o;
  for (double g : weights) acc += g * g;
  return std::sqrt(acc);
}

ParamGrad backward(const ModelParams& params, const ForwardPass& pass, const LogitGrad& grad,
                   Exec exec) {
  ParamGrad out(params.weights.size());
  out.t_m = grad.d_tm;
  out.t_o = grad.d_to;

  auto d_weights = [&](const DenseLayout& l) {
    return std::span<double>(out.weights.data() + l.weight_offset,
                             static_cast<std::size_t>(l.in) * l.out);
  };
  auto d_bias = [&](const DenseLayout& l) {
    return std::span<double>(out.weights.data() + l.bias_offset, static_cast<std::size_t>(l.out));
  };

  const Matrix& features = pass.activations.back();
  Matrix d_h(features.rows(), features.cols());
  Matrix scratch(features.rows(), features.cols());
  bool any = false;
  auto head = [&](const Matrix& dz, const DenseLayout& l) {
    if (dz.empty()) return;
    kernels::affine_backward_params(dz, features, d_weights(l), d_bias(l), exec);
    kernels::affine_backward_input(dz, params.layer_weights(l), scratch, exec);
    auto acc = d_h.flat();
    auto add = scratch.flat();
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += add[i];
    any = true;
  };
  head(grad.d_zf, params.layout.classifier);
  head(grad.d_zg, params.layout.ood);
  if (!any) return out;

  const auto& enc = params.layout.encoder;
  for (std::size_t idx = enc.size(); idx-- > 0;) {
    kernels::activate_backward(pass.activations[idx + 1], d_h, params.arch.activation, exec);
    kernels::affine_backward_params(d_h, pass.activations[idx], d_weights(enc[idx]),
                                    d_bias(enc[idx]), exec);
    if (idx == 0) break;
    Matrix d_prev(d_h.rows(), static_cast<std::size_t>(enc[idx].in));
    kernels::affine_backward_input(d_h, params.layer_weights(enc[idx]), d_prev, exec);
    d_h = std::move(d_prev);
  }
  return out;
}

}  // namespace calimatch
