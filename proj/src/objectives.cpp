#include "calimatch/objectives.hpp"

#include <algorithm>
#include <cmath>

#include "calimatch/error.hpp"

namespace calimatch {

std::string to_string(Reduction r) { return r == Reduction::mean ? "mean" : "sum"; }

Reduction reduction_from_string(const std::string& name) {
  if (name == "mean") return Reduction::mean;
  if (name == "sum") return Reduction::sum;
  throw ConfigError("unknown reduction '" + name + "' (expected mean or sum)");
}

std::string to_string(OcalMinMode m) {
  return m == OcalMinMode::verbatim ? "verbatim" : "hard_negative";
}

OcalMinMode ocal_min_mode_from_string(const std::string& name) {
  if (name == "verbatim") return OcalMinMode::verbatim;
  if (name == "hard_negative") return OcalMinMode::hard_negative;
  throw ConfigError("unknown ocal_min_mode '" + name + "' (expected verbatim or hard_negative)");
}

namespace {

inline bool unclamped(double x) noexcept { return x > kProbFloor && x < 1.0 - kProbFloor; }

// d/dx log(clamp(x))
inline double dlog(double x) noexcept { return unclamped(x) ? 1.0 / x : 0.0; }

// log(1 - clamp(x)) and its derivative
inline double log1m(double x) noexcept {
  return std::log(1.0 - std::clamp(x, kProbFloor, 1.0 - kProbFloor));
}
inline double dlog1m(double x) noexcept { return unclamped(x) ? -1.0 / (1.0 - x) : 0.0; }

double reduction_scale(Reduction r, std::size_t n) {
  return r == Reduction::mean && n > 0 ? 1.0 / static_cast<double>(n) : 1.0;
}

void check_labels(const ModelOutputs& out, std::span<const int> labels) {
  if (labels.size() != out.batch_size())
    throw ValidationError("label count " + std::to_string(labels.size()) +
                          " does not match batch size " + std::to_string(out.batch_size()));
  const int k = static_cast<int>(out.num_classes());
  for (int y : labels)
    if (y < 0 || y >= k) throw ValidationError("label " + std::to_string(y) + " outside [0, K)");
}

void check_unit_interval(std::span<const double> values, std::size_t n, const char* name) {
  if (values.size() != n)
    throw ValidationError(std::string(name) + " count does not match batch size");
  for (double v : values)
    if (!(v >= 0.0 && v <= 1.0))
      throw DomainError(std::string(name) + " value " + std::to_string(v) + " outside [0, 1]");
}

void add_scaled(Matrix& dst, const Matrix& src, double scale) {
  if (src.empty()) return;
  if (dst.empty()) dst = Matrix(src.rows(), src.cols());
  auto d = dst.flat();
  auto s = src.flat();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] += scale * s[i];
}

// Softmax backprop of one row: returns d/d(logits / T) into `da`.
inline double softmax_vjp(std::span<const double> probs, std::span<const double> g,
                          std::span<double> da) {
  double dot = 0.0;
  for (std::size_t k = 0; k < probs.size(); ++k) dot += g[k] * probs[k];
  double total = 0.0;
  for (std::size_t k = 0; k < probs.size(); ++k) {
    da[k] = probs[k] * (g[k] - dot);
    total += da[k];
  }
  return total;
}

}  // namespace

double clamped_log(double x) noexcept {
  return std::log(std::clamp(x, kProbFloor, 1.0 - kProbFloor));
}

void ViewGrad::accumulate(const ViewGrad& other, double scale) {
  add_scaled(p, other.p, scale);
  add_scaled(q, other.q, scale);
  add_scaled(p_s, other.p_s, scale);
  add_scaled(q_s, other.q_s, scale);
}

LogitGrad to_logit_grad(const ModelOutputs& out, const ViewGrad& grad) {
  const std::size_t n = out.batch_size();
  const std::size_t k = out.num_classes();
  LogitGrad lg{Matrix(n, k), Matrix(n, k), 0.0, 0.0};
  std::vector<double> da(k);

  if (!grad.p.empty()) {
    for (std::size_t r = 0; r < n; ++r) {
      softmax_vjp(out.p.row(r), grad.p.row(r), da);
      auto dz = lg.d_zf.row(r);
      for (std::size_t j = 0; j < k; ++j) dz[j] += da[j];
    }
  }
  if (!grad.p_s.empty()) {
    const double t = out.t_m;
    for (std::size_t r = 0; r < n; ++r) {
      softmax_vjp(out.p_s.row(r), grad.p_s.row(r), da);
      auto dz = lg.d_zf.row(r);
      auto z = out.z_f.row(r);
      for (std::size_t j = 0; j < k; ++j) {
        dz[j] += da[j] / t;
        lg.d_tm -= da[j] * z[j] / (t * t);
      }
    }
  }
  if (!grad.q.empty()) {
    auto g = grad.q.flat();
    auto q = out.q.flat();
    auto dz = lg.d_zg.flat();
    for (std::size_t i = 0; i < g.size(); ++i) dz[i] += g[i] * q[i] * (1.0 - q[i]);
  }
  if (!grad.q_s.empty()) {
    const double t = out.t_o;
    for (std::size_t r = 0; r < n; ++r) {
      softmax_vjp(out.q_s.row(r), grad.q_s.row(r), da);
      auto dz = lg.d_zg.row(r);
      auto z = out.z_g.row(r);
      for (std::size_t j = 0; j < k; ++j) {
        dz[j] += da[j] / t;
        lg.d_to -= da[j] * z[j] / (t * t);
      }
    }
  }
  return lg;
}

std::vector<int> labels_from_one_hot(const Matrix& one_hot) {
  std::vector<int> labels(one_hot.rows());
  for (std::size_t r = 0; r < one_hot.rows(); ++r) {
    int hot = -1;
    for (std::size_t c = 0; c < one_hot.cols(); ++c) {
      const double v = one_hot(r, c);
      if (v == 1.0 && hot < 0) {
        hot = static_cast<int>(c);
      } else if (v != 0.0) {
        throw ValidationError("row " + std::to_string(r) + " is not one-hot");
      }
    }
    if (hot < 0) throw ValidationError("row " + std::to_string(r) + " is not one-hot");
    labels[r] = hot;
  }
  return labels;
}

Matrix one_hot(std::span<const int> labels, int num_classes) {
  Matrix m(labels.size(), static_cast<std::size_t>(num_classes));
  for (std::size_t r = 0; r < labels.size(); ++r) m(r, static_cast<std::size_t>(labels[r])) = 1.0;
  return m;
}

LossTerm loss_ce(const ModelOutputs& out, std::span<const int> labels, Reduction reduction) {
  check_labels(out, labels);
  const std::size_t n = out.batch_size();
  const double scale = reduction_scale(reduction, n);
  LossTerm term;
  term.grad.p = Matrix(n, out.num_classes());
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto y = static_cast<std::size_t>(labels[i]);
    const double py = out.p(i, y);
    total -= clamped_log(py);
    term.grad.p(i, y) = -scale * dlog(py);
  }
  term.value = scale * total;
  return term;
}

LossTerm loss_ood(const ModelOutputs& out, std::span<const int> labels, Reduction reduction) {
  if (out.num_classes() < 2) throw ConfigError("OOD loss needs at least two classes");
  check_labels(out, labels);
  const std::size_t n = out.batch_size();
  const std::size_t k = out.num_classes();
  const double scale = reduction_scale(reduction, n);
  LossTerm term;
  term.grad.q = Matrix(n, k);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto y = static_cast<std::size_t>(labels[i]);
    // min_{l != y} log(1 - q_l) is attained at the largest non-true q_l.
    std::size_t hardest = y == 0 ? 1 : 0;
    for (std::size_t l = 0; l < k; ++l)
      if (l != y && out.q(i, l) > out.q(i, hardest)) hardest = l;
    total -= clamped_log(out.q(i, y)) + log1m(out.q(i, hardest));
    term.grad.q(i, y) = -scale * dlog(out.q(i, y));
    term.grad.q(i, hardest) = -scale * dlog1m(out.q(i, hardest));
  }
  term.value = scale * total;
  return term;
}

PairLossTerm loss_soft_consistency(const ModelOutputs& view1, const ModelOutputs& view2,
                                   Reduction reduction) {
  if (view1.batch_size() != view2.batch_size() || view1.num_classes() != view2.num_classes())
    throw ValidationError("soft consistency: the two views differ in shape");
  const std::size_t n = view1.batch_size();
  const std::size_t k = view1.num_classes();
  const double scale = reduction_scale(reduction, n);
  PairLossTerm term;
  term.first.q = Matrix(n, k);
  term.second.q = Matrix(n, k);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < k; ++c) {
      const double d = view1.q(i, c) - view2.q(i, c);
      total += d * d;
      term.first.q(i, c) = 2.0 * scale * d;
      term.second.q(i, c) = -2.0 * scale * d;
    }
  }
  term.value = scale * total;
  return term;
}

LossTerm loss_mcal(const ModelOutputs& out, std::span<const int> labels,
                   std::span<const double> gammas, Reduction reduction) {
  if (out.num_classes() < 2) throw ConfigError("calibration loss needs at least two classes");
  check_labels(out, labels);
  const std::size_t n = out.batch_size();
  const std::size_t k = out.num_classes();
  check_unit_interval(gammas, n, "gamma");
  const double scale = reduction_scale(reduction, n);
  LossTerm term;
  term.grad.p_s = Matrix(n, k);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto y = static_cast<std::size_t>(labels[i]);
    const double off = (1.0 - gammas[i]) / static_cast<double>(k - 1);
    for (std::size_t c = 0; c < k; ++c) {
      const double target = c == y ? gammas[i] : off;
      const double ps = out.p_s(i, c);
      total -= target * clamped_log(ps);
      term.grad.p_s(i, c) = -scale * target * dlog(ps);
    }
  }
  term.value = scale * total;
  return term;
}

LossTerm loss_ocal(const ModelOutputs& out, std::span<const int> labels,
                   std::span<const double> deltas, Reduction reduction, OcalMinMode mode) {
  if (out.num_classes() < 2) throw ConfigError("calibration loss needs at least two classes");
  check_labels(out, labels);
  const std::size_t n = out.batch_size();
  const std::size_t k = out.num_classes();
  check_unit_interval(deltas, n, "delta");
  const double scale = reduction_scale(reduction, n);
  LossTerm term;
  term.grad.q_s = Matrix(n, k);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto y = static_cast<std::size_t>(labels[i]);
    const double delta = deltas[i];
    double first = 0.0;
    for (std::size_t c = 0; c < k; ++c) {
      const double w = c == y ? delta : 1.0 - delta;
      first += w * clamped_log(out.q_s(i, c));
      term.grad.q_s(i, c) = -scale * w * dlog(out.q_s(i, c));
    }
    std::size_t arg = k;
    double best = 0.0;
    for (std::size_t c = 0; c < k; ++c) {
      if (mode == OcalMinMode::hard_negative && c == y) continue;
      const double v = c == y ? 1.0 - delta : delta;
      const double candidate = v * log1m(out.q_s(i, c));
      if (arg == k || candidate < best) {
        best = candidate;
        arg = c;
      }
    }
    const double v = arg == y ? 1.0 - delta : delta;
    term.grad.q_s(i, arg) += -scale * v * dlog1m(out.q_s(i, arg));
    total -= first + best;
  }
  term.value = scale * total;
  return term;
}

LossTerm loss_fix(const ModelOutputs& weak, const ModelOutputs& strong,
                  const std::vector<bool>& mask, Reduction reduction) {
  if (weak.batch_size() != strong.batch_size() || weak.num_classes() != strong.num_classes())
    throw ValidationError("fixmatch loss: weak and strong views differ in shape");
  if (mask.size() != weak.batch_size())
    throw ValidationError("fixmatch loss: mask size does not match batch size");
  const std::size_t n = weak.batch_size();
  const std::size_t k = weak.num_classes();
  const double scale = reduction_scale(reduction, n);
  LossTerm term;
  term.grad.p = Matrix(n, k);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!mask[i]) continue;
    auto row = weak.p.row(i);
    const auto pseudo =
        static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
    const double ps = strong.p(i, pseudo);
    total -= clamped_log(ps);
    term.grad.p(i, pseudo) = -scale * dlog(ps);
  }
  term.value = scale * total;
  return term;
}

double LossBreakdown::weighted_total() const noexcept {
  double t = l_ce;
  if (l_ood) t += lambda_o * *l_ood;
  if (l_sc) t += lambda_s * *l_sc;
  if (l_mcal) t += *l_mcal;
  if (l_ocal) t += lambda_ocal * *l_ocal;
  if (l_fix) t += *l_fix;
  return t;
}

}  // namespace calimatch
