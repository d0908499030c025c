#include "calimatch/kernels.hpp"

#include <algorithm>
#include <cmath>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace calimatch {

bool parallel_available() noexcept {
#ifdef _OPENMP
  return true;
#else
  return false;
#endif
}

int parallel_threads() noexcept {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

namespace kernels {
namespace {

// Per-element bodies shared by both paths so the arithmetic is identical.

inline void affine_row(const Matrix& x, std::span<const double> w, std::span<const double> b,
                       Matrix& y, std::size_t r) {
  const std::size_t in = x.cols();
  const std::size_t out = y.cols();
  const double* xr = x.row(r).data();
  double* yr = y.row(r).data();
  for (std::size_t o = 0; o < out; ++o) {
    const double* wo = w.data() + o * in;
    double acc = b[o];
    for (std::size_t i = 0; i < in; ++i) acc += wo[i] * xr[i];
    yr[o] = acc;
  }
}

inline void backward_input_row(const Matrix& dy, std::span<const double> w, Matrix& dx,
                               std::size_t r) {
  const std::size_t in = dx.cols();
  const std::size_t out = dy.cols();
  const double* dyr = dy.row(r).data();
  double* dxr = dx.row(r).data();
  std::fill(dxr, dxr + in, 0.0);
  for (std::size_t o = 0; o < out; ++o) {
    const double g = dyr[o];
    const double* wo = w.data() + o * in;
    for (std::size_t i = 0; i < in; ++i) dxr[i] += g * wo[i];
  }
}

// One output unit: its weight row and bias, summed over the batch in row order.
inline void backward_params_unit(const Matrix& dy, const Matrix& x, std::span<double> dw,
                                 std::span<double> db, std::size_t o) {
  const std::size_t in = x.cols();
  const std::size_t n = x.rows();
  double* dwo = dw.data() + o * in;
  double bias_acc = db[o];
  for (std::size_t r = 0; r < n; ++r) {
    const double g = dy(r, o);
    if (g == 0.0) continue;
    const double* xr = x.row(r).data();
    for (std::size_t i = 0; i < in; ++i) dwo[i] += g * xr[i];
    bias_acc += g;
  }
  db[o] = bias_acc;
}

inline double activate_value(double v, Activation act) {
  return act == Activation::relu ? (v > 0.0 ? v : 0.0) : std::tanh(v);
}

inline double activate_slope(double activated, Activation act) {
  return act == Activation::relu ? (activated > 0.0 ? 1.0 : 0.0) : 1.0 - activated * activated;
}

inline void softmax_row(std::span<const double> z, double inv_t, std::span<double> out) {
  double peak = z[0];
  for (double v : z) peak = std::max(peak, v);
  double total = 0.0;
  for (std::size_t k = 0; k < z.size(); ++k) {
    out[k] = std::exp((z[k] - peak) * inv_t);
    total += out[k];
  }
  for (double& v : out) v /= total;
}

inline double sigmoid_value(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

}  // namespace

namespace serial {

void affine(const Matrix& x, std::span<const double> weights, std::span<const double> bias,
            Matrix& y) {
  for (std::size_t r = 0; r < x.rows(); ++r) affine_row(x, weights, bias, y, r);
}

void affine_backward_input(const Matrix& dy, std::span<const double> weights, Matrix& dx) {
  for (std::size_t r = 0; r < dy.rows(); ++r) backward_input_row(dy, weights, dx, r);
}

void affine_backward_params(const Matrix& dy, const Matrix& x, std::span<double> d_weights,
                            std::span<double> d_bias) {
  for (std::size_t o = 0; o < dy.cols(); ++o) backward_params_unit(dy, x, d_weights, d_bias, o);
}

void activate(Matrix& values, Activation act) {
  for (double& v : values.flat()) v = activate_value(v, act);
}

void activate_backward(const Matrix& activated, Matrix& grad, Activation act) {
  auto a = activated.flat();
  auto g = grad.flat();
  for (std::size_t i = 0; i < g.size(); ++i) g[i] *= activate_slope(a[i], act);
}

void softmax_rows(const Matrix& z, double temperature, Matrix& out) {
  const double inv_t = 1.0 / temperature;
  for (std::size_t r = 0; r < z.rows(); ++r) softmax_row(z.row(r), inv_t, out.row(r));
}

void sigmoid(const Matrix& z, Matrix& out) {
  auto src = z.flat();
  auto dst = out.flat();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = sigmoid_value(src[i]);
}

}  // namespace serial

namespace parallel {

void affine(const Matrix& x, std::span<const double> weights, std::span<const double> bias,
            Matrix& y) {
  const auto n = static_cast<long>(x.rows());
#pragma omp parallel for schedule(static)
  for (long r = 0; r < n; ++r) affine_row(x, weights, bias, y, static_cast<std::size_t>(r));
}

void affine_backward_input(const Matrix& dy, std::span<const double> weights, Matrix& dx) {
  const auto n = static_cast<long>(dy.rows());
#pragma omp parallel for schedule(static)
  for (long r = 0; r < n; ++r) backward_input_row(dy, weights, dx, static_cast<std::size_t>(r));
}

void affine_backward_params(const Matrix& dy, const Matrix& x, std::span<double> d_weights,
                            std::span<double> d_bias) {
  const auto units = static_cast<long>(dy.cols());
#pragma omp parallel for schedule(static)
  for (long o = 0; o < units; ++o)
    backward_params_unit(dy, x, d_weights, d_bias, static_cast<std::size_t>(o));
}

void activate(Matrix& values, Activation act) {
  auto v = values.flat();
  const auto n = static_cast<long>(v.size());
#pragma omp parallel for schedule(static)
  for (long i = 0; i < n; ++i) v[i] = activate_value(v[i], act);
}

void activate_backward(const Matrix& activated, Matrix& grad, Activation act) {
  auto a = activated.flat();
  auto g = grad.flat();
  const auto n = static_cast<long>(g.size());
#pragma omp parallel for schedule(static)
  for (long i = 0; i < n; ++i) g[i] *= activate_slope(a[i], act);
}

void softmax_rows(const Matrix& z, double temperature, Matrix& out) {
  const double inv_t = 1.0 / temperature;
  const auto n = static_cast<long>(z.rows());
#pragma omp parallel for schedule(static)
  for (long r = 0; r < n; ++r) {
    const auto row = static_cast<std::size_t>(r);
    softmax_row(z.row(row), inv_t, out.row(row));
  }
}

void sigmoid(const Matrix& z, Matrix& out) {
  auto src = z.flat();
  auto dst = out.flat();
  const auto n = static_cast<long>(src.size());
#pragma omp parallel for schedule(static)
  for (long i = 0; i < n; ++i) dst[i] = sigmoid_value(src[i]);
}

}  // namespace parallel

#define CALIMATCH_DISPATCH(fn, ...)        \
  do {                                     \
    if (exec == Exec::parallel) {          \
      parallel::fn(__VA_ARGS__);           \
    } else {                               \
      serial::fn(__VA_ARGS__);             \
    }                                      \
  } while (false)

void affine(const Matrix& x, std::span<const double> weights, std::span<const double> bias,
            Matrix& y, Exec exec) {
  CALIMATCH_DISPATCH(affine, x, weights, bias, y);
}

void affine_backward_input(const Matrix& dy, std::span<const double> weights, Matrix& dx,
                           Exec exec) {
  CALIMATCH_DISPATCH(affine_backward_input, dy, weights, dx);
}

void affine_backward_params(const Matrix& dy, const Matrix& x, std::span<double> d_weights,
                            std::span<double> d_bias, Exec exec) {
  CALIMATCH_DISPATCH(affine_backward_params, dy, x, d_weights, d_bias);
}

void activate(Matrix& values, Activation act, Exec exec) {
  CALIMATCH_DISPATCH(activate, values, act);
}

void activate_backward(const Matrix& activated, Matrix& grad, Activation act, Exec exec) {
  CALIMATCH_DISPATCH(activate_backward, activated, grad, act);
}

void softmax_rows(const Matrix& z, double temperature, Matrix& out, Exec exec) {
  CALIMATCH_DISPATCH(softmax_rows, z, temperature, out);
}

void sigmoid(const Matrix& z, Matrix& out, Exec exec) { CALIMATCH_DISPATCH(sigmoid, z, out); }

#undef CALIMATCH_DISPATCH

}  // namespace kernels
}  // namespace calimatch
