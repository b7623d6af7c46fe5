#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "evovit/matrix.hpp"

namespace evovit {

// Every kernel here is a pure function of its inputs. Each has a matching
// *_backward that maps an output adjoint to input adjoints; parameter
// adjoints are accumulated (+=) into caller-owned buffers.
//
// Inner products are summed left to right over the shared dimension, so a
// given input always produces bit-identical output.

inline constexpr double kLayerNormEps = 1e-6;

// a (m x k) * b (k x n).
Matrix matmul(const Matrix& a, const Matrix& b);
// a (m x k) * b^T where b is (n x k).
Matrix matmul_nt(const Matrix& a, const Matrix& b);
// a^T * b where a is (k x m) and b is (k x n).
Matrix matmul_tn(const Matrix& a, const Matrix& b);

struct MatmulGrads {
  Matrix da;
  Matrix db;
};
MatmulGrads matmul_backward(const Matrix& a, const Matrix& b, const Matrix& dout);

// x * w + bias (bias broadcast over rows). bias may be empty.
Matrix linear(const Matrix& x, const Matrix& w, std::span<const double> bias);
// Returns dx; accumulates dw and dbias.
Matrix linear_backward(const Matrix& x, const Matrix& w, const Matrix& dout, Matrix& dw,
                       std::span<double> dbias);

Matrix softmax_rows(const Matrix& m);
// y is the softmax output.
Matrix softmax_rows_backward(const Matrix& y, const Matrix& dy);

struct LayerNormCache {
  Matrix normalized;  // (x - mean) / sqrt(var + eps)
  std::vector<double> inv_std;
};

Matrix layer_norm_rows(const Matrix& m, std::span<const double> gain, std::span<const double> bias,
                       double eps = kLayerNormEps, LayerNormCache* cache = nullptr);
Matrix layer_norm_rows_backward(const Matrix& dout, const LayerNormCache& cache,
                                std::span<const double> gain, std::span<double> dgain,
                                std::span<double> dbias);

// GELU, tanh approximation:
//   0.5 x (1 + tanh(sqrt(2/pi) (x + 0.044715 x^3)))
double gelu(double x);
double gelu_derivative(double x);
Matrix gelu_map(const Matrix& m);
Matrix gelu_map_backward(const Matrix& x, const Matrix& dout);

// Mean over rows of -log softmax(logits)[label].
double cross_entropy_logits(const Matrix& logits, std::span<const int> labels);
// Gradient of the mean loss with respect to the logits.
Matrix cross_entropy_logits_backward(const Matrix& logits, std::span<const int> labels);

// Index of the largest entry, lowest index on ties.
std::size_t argmax(std::span<const double> v);

}  // namespace evovit
