#pragma once

// Batch kernels for the dense network. Every kernel has a serial reference
// implementation and an OpenMP implementation. The parallel versions split
// work over independent output elements and keep each element's reduction
// order identical to the serial one, so both paths agree bit for bit.

#include <span>

#include "calimatch/matrix.hpp"

namespace calimatch {

enum class Exec { serial, parallel };

enum class Activation { relu, tanh };

/// True when the library was built with OpenMP.
bool parallel_available() noexcept;
/// Worker count the parallel path will use (1 without OpenMP).
int parallel_threads() noexcept;

namespace kernels {

// weights are row-major [out x in]; y = x * W^T + b.
void affine(const Matrix& x, std::span<const double> weights, std::span<const double> bias,
            Matrix& y, Exec exec);
// dx = dy * W
void affine_backward_input(const Matrix& dy, std::span<const double> weights, Matrix& dx,
                           Exec exec);
// dW += dy^T * x, db += column sums of dy
void affine_backward_params(const Matrix& dy, const Matrix& x, std::span<double> d_weights,
                            std::span<double> d_bias, Exec exec);

void activate(Matrix& values, Activation act, Exec exec);
// grad *= act'(pre), expressed through the post-activation values.
void activate_backward(const Matrix& activated, Matrix& grad, Activation act, Exec exec);

/// Row-wise softmax(z / temperature).
void softmax_rows(const Matrix& z, double temperature, Matrix& out, Exec exec);
void sigmoid(const Matrix& z, Matrix& out, Exec exec);

namespace serial {
void affine(const Matrix& x, std::span<const double> weights, std::span<const double> bias,
            Matrix& y);
void affine_backward_input(const Matrix& dy, std::span<const double> weights, Matrix& dx);
void affine_backward_params(const Matrix& dy, const Matrix& x, std::span<double> d_weights,
                            std::span<double> d_bias);
void activate(Matrix& values, Activation act);
void activate_backward(const Matrix& activated, Matrix& grad, Activation act);
void softmax_rows(const Matrix& z, double temperature, Matrix& out);
void sigmoid(const Matrix& z, Matrix& out);
}  // namespace serial

namespace parallel {
void affine(const Matrix& x, std::span<const double> weights, std::span<const double> bias,
            Matrix& y);
void affine_backward_input(const Matrix& dy, std::span<const double> weights, Matrix& dx);
void affine_backward_params(const Matrix& dy, const Matrix& x, std::span<double> d_weights,
                            std::span<double> d_bias);
void activate(Matrix& values, Activation act);
void activate_backward(const Matrix& activated, Matrix& grad, Activation act);
void softmax_rows(const Matrix& z, double temperature, Matrix& out);
void sigmoid(const Matrix& z, Matrix& out);
}  // namespace parallel

}  // namespace kernels
}  // namespace calimatch
