#pragma once

// Shared oracles for the test suite.

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <span>
#include <vector>

#include "calimatch/model.hpp"
#include "calimatch/objectives.hpp"

namespace calimatch::testing {

inline Matrix random_matrix(std::size_t rows, std::size_t cols, std::mt19937_64& rng,
                            double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  Matrix m(rows, cols);
  for (double& v : m.flat()) v = n(rng);
  return m;
}

inline std::vector<int> random_labels(std::size_t n, int k, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> d(0, k - 1);
  std::vector<int> y(n);
  for (int& v : y) v = d(rng);
  return y;
}

inline std::vector<double> random_unit(std::size_t n, std::mt19937_64& rng, double lo = 0.0,
                                       double hi = 1.0) {
  std::uniform_real_distribution<double> d(lo, hi);
  std::vector<double> v(n);
  for (double& x : v) x = d(rng);
  return v;
}

/// Logits and temperatures: the inputs every loss is differentiated against.
struct LogitPoint {
  Matrix z_f;
  Matrix z_g;
  double t_m = 1.0;
  double t_o = 1.0;

  ModelOutputs outputs() const { return outputs_from_logits(z_f, z_g, t_m, t_o, Exec::serial); }
};

inline LogitPoint random_point(std::size_t n, std::size_t k, std::mt19937_64& rng,
                               double logit_scale = 1.0) {
  std::uniform_real_distribution<double> t(0.5, 3.0);
  LogitPoint p{random_matrix(n, k, rng, logit_scale), random_matrix(n, k, rng, logit_scale), t(rng),
               t(rng)};
  return p;
}

/// Gap between the smallest and second-smallest value; infinite with fewer than two.
inline double min_gap(std::vector<double> v) {
  if (v.size() < 2) return INFINITY;
  std::sort(v.begin(), v.end());
  return v[1] - v[0];
}

/// Smallest gap between the two leading candidates of every min() inside the
/// OOD and OvR calibration losses. Central differences straddle a kink when
/// this is comparable to the step.
inline double kink_margin(const LogitPoint& point, std::span<const int> labels,
                          std::span<const double> deltas) {
  const auto out = point.outputs();
  double margin = INFINITY;
  for (std::size_t i = 0; i < out.batch_size(); ++i) {
    const auto y = static_cast<std::size_t>(labels[i]);
    std::vector<double> ood, verbatim, hard;
    for (std::size_t c = 0; c < out.num_classes(); ++c) {
      if (c != y) ood.push_back(std::log1p(-out.q(i, c)));
      const double v = c == y ? 1.0 - deltas[i] : deltas[i];
      verbatim.push_back(v * std::log1p(-out.q_s(i, c)));
      if (c != y) hard.push_back(v * std::log1p(-out.q_s(i, c)));
    }
    margin = std::min({margin, min_gap(ood), min_gap(verbatim), min_gap(hard)});
  }
  return margin;
}

/// ||a - b|| / max(||a||, ||b||); zero when both vanish.
inline double relative_error(const std::vector<double>& a, const std::vector<double>& b) {
  double diff = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  const double scale = std::sqrt(std::max(na, nb));
  if (scale < 1e-10) return std::sqrt(diff);
  return std::sqrt(diff) / scale;
}

struct FdResult {
  double z_f = 0.0;
  double z_g = 0.0;
  double t_m = 0.0;
  double t_o = 0.0;
  double joint = 0.0;  // over the concatenated gradient (logits, T_M, T_O)

  double worst() const { return joint; }
};

/// Central differences of `loss` around `point`, compared with `analytic`.
inline FdResult finite_difference_check(const LogitPoint& point,
                                        const std::function<double(const LogitPoint&)>& loss,
                                        const LogitGrad& analytic, double h = 1e-3) {
  auto central = [&](auto&& bump) {
    LogitPoint up = point, down = point;
    bump(up, +h);
    bump(down, -h);
    return (loss(up) - loss(down)) / (2.0 * h);
  };
  auto matrix_grad = [&](Matrix LogitPoint::*member) {
    std::vector<double> g((point.*member).size());
    for (std::size_t i = 0; i < g.size(); ++i)
      g[i] = central([&](LogitPoint& p, double d) { (p.*member).flat()[i] += d; });
    return g;
  };
  FdResult r;
  const auto fd_f = matrix_grad(&LogitPoint::z_f);
  const auto fd_g = matrix_grad(&LogitPoint::z_g);
  auto as_vec = [&](const Matrix& m, std::size_t n) {
    return m.empty() ? std::vector<double>(n, 0.0) : m.storage();
  };
  r.z_f = relative_error(as_vec(analytic.d_zf, fd_f.size()), fd_f);
  r.z_g = relative_error(as_vec(analytic.d_zg, fd_g.size()), fd_g);
  const double fd_tm = central([](LogitPoint& p, double d) { p.t_m += d; });
  const double fd_to = central([](LogitPoint& p, double d) { p.t_o += d; });
  r.t_m = relative_error({analytic.d_tm}, {fd_tm});
  r.t_o = relative_error({analytic.d_to}, {fd_to});
  auto all_an = as_vec(analytic.d_zf, fd_f.size());
  const auto an_g = as_vec(analytic.d_zg, fd_g.size());
  all_an.insert(all_an.end(), an_g.begin(), an_g.end());
  all_an.push_back(analytic.d_tm);
  all_an.push_back(analytic.d_to);
  auto all_fd = fd_f;
  all_fd.insert(all_fd.end(), fd_g.begin(), fd_g.end());
  all_fd.push_back(fd_tm);
  all_fd.push_back(fd_to);
  r.joint = relative_error(all_an, all_fd);
  return r;
}

}  // namespace calimatch::testing
