#include "evovit/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

namespace evovit {

Matrix Matrix::from_rows(const std::vector<std::vector<double>>& rows) {
  if (rows.empty()) return {};
  const std::size_t cols = rows.front().size();
  Matrix m(rows.size(), cols);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].size() != cols) {
      throw DimensionError("ragged row " + std::to_string(r) + ": expected " +
                           std::to_string(cols) + " columns, got " + std::to_string(rows[r].size()));
    }
    std::copy(rows[r].begin(), rows[r].end(), m.row(r).begin());
  }
  return m;
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Matrix Matrix::row_vector(std::span<const double> values) {
  return Matrix(1, values.size(), std::vector<double>(values.begin(), values.end()));
}

void Matrix::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

bool Matrix::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

Matrix gather_rows(const Matrix& m, std::span<const std::size_t> indices) {
  Matrix out(indices.size(), m.cols());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= m.rows()) {
      throw IndexError("row index " + std::to_string(indices[i]) + " out of range for " + m.shape());
    }
    std::copy_n(m.row(indices[i]).begin(), m.cols(), out.row(i).begin());
  }
  return out;
}

namespace {

void require_same_shape(const Matrix& a, const Matrix& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + a.shape() + " vs " + b.shape());
  }
}

Matrix transpose(const Matrix& m) {
  Matrix t(m.cols(), m.rows());
  for (std::size_t r = 0; r < m.rows(); ++r) {
    for (std::size_t c = 0; c < m.cols(); ++c) t(c, r) = m(r, c);
  }
  return t;
}

}  // namespace

Matrix add(const Matrix& a, const Matrix& b) {
  Matrix out = a;
  add_inplace(out, b);
  return out;
}

void add_inplace(Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "add");
  auto dst = a.flat();
  auto src = b.flat();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

double max_abs_diff(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "max_abs_diff");
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    worst = std::max(worst, std::abs(a.flat()[i] - b.flat()[i]));
  }
  return worst;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) {
    throw DimensionError("matmul: inner dimensions differ, " + a.shape() + " x " + b.shape());
  }
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  Matrix c(m, n);
  // i-p-j order: every c(i, j) accumulates its terms in ascending p.
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = c.row(i).data();
    const double* arow = a.row(i).data();
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = arow[p];
      const double* brow = b.row(p).data();
      for (std::size_t j = 0; j < n; ++j) crow[j] += aip * brow[j];
    }
  }
  return c;
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols()) {
    throw DimensionError("matmul_nt: inner dimensions differ, " + a.shape() + " x " + b.shape() +
                         "^T");
  }
  return matmul(a, transpose(b));
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows()) {
    throw DimensionError("matmul_tn: inner dimensions differ, " + a.shape() + "^T x " + b.shape());
  }
  const std::size_t k = a.rows(), m = a.cols(), n = b.cols();
  Matrix c(m, n);
  for (std::size_t p = 0; p < k; ++p) {
    const double* arow = a.row(p).data();
    const double* brow = b.row(p).data();
    for (std::size_t i = 0; i < m; ++i) {
      const double api = arow[i];
      double* crow = c.row(i).data();
      for (std::size_t j = 0; j < n; ++j) crow[j] += api * brow[j];
    }
  }
  return c;
}

MatmulGrads matmul_backward(const Matrix& a, const Matrix& b, const Matrix& dout) {
  if (dout.rows() != a.rows() || dout.cols() != b.cols()) {
    throw DimensionError("matmul_backward: adjoint " + dout.shape() + " does not match product of " +
                         a.shape() + " x " + b.shape());
  }
  return {matmul_nt(dout, b), matmul_tn(a, dout)};
}

Matrix linear(const Matrix& x, const Matrix& w, std::span<const double> bias) {
  Matrix out = matmul(x, w);
  if (!bias.empty()) {
    if (bias.size() != out.cols()) {
      throw DimensionError("linear: bias length " + std::to_string(bias.size()) +
                           " does not match output " + out.shape());
    }
    for (std::size_t r = 0; r < out.rows(); ++r) {
      auto row = out.row(r);
      for (std::size_t c = 0; c < row.size(); ++c) row[c] += bias[c];
    }
  }
  return out;
}

Matrix linear_backward(const Matrix& x, const Matrix& w, const Matrix& dout, Matrix& dw,
                       std::span<double> dbias) {
  auto grads = matmul_backward(x, w, dout);
  add_inplace(dw, grads.db);
  if (!dbias.empty()) {
    for (std::size_t r = 0; r < dout.rows(); ++r) {
      auto row = dout.row(r);
      for (std::size_t c = 0; c < row.size(); ++c) dbias[c] += row[c];
    }
  }
  return std::move(grads.da);
}

Matrix softmax_rows(const Matrix& m) {
  if (m.empty()) throw DimensionError("softmax_rows: empty input " + m.shape());
  Matrix out(m.rows(), m.cols());
  for (std::size_t r = 0; r < m.rows(); ++r) {
    auto in = m.row(r);
    auto o = out.row(r);
    const double peak = *std::max_element(in.begin(), in.end());
    double total = 0.0;
    for (std::size_t c = 0; c < in.size(); ++c) {
      o[c] = std::exp(in[c] - peak);
      total += o[c];
    }
    for (double& v : o) v /= total;
  }
  return out;
}

Matrix softmax_rows_backward(const Matrix& y, const Matrix& dy) {
  require_same_shape(y, dy, "softmax_rows_backward");
  Matrix dx(y.rows(), y.cols());
  for (std::size_t r = 0; r < y.rows(); ++r) {
    auto yr = y.row(r);
    auto dyr = dy.row(r);
    double dot = 0.0;
    for (std::size_t c = 0; c < yr.size(); ++c) dot += yr[c] * dyr[c];
    auto dxr = dx.row(r);
    for (std::size_t c = 0; c < yr.size(); ++c) dxr[c] = yr[c] * (dyr[c] - dot);
  }
  return dx;
}

Matrix layer_norm_rows(const Matrix& m, std::span<const double> gain, std::span<const double> bias,
                       double eps, LayerNormCache* cache) {
  if (gain.size() != m.cols() || bias.size() != m.cols()) {
    throw DimensionError("layer_norm_rows: gain/bias lengths " + std::to_string(gain.size()) + "/" +
                         std::to_string(bias.size()) + " do not match input " + m.shape());
  }
  const std::size_t n = m.cols();
  Matrix out(m.rows(), n);
  Matrix normalized(m.rows(), n);
  std::vector<double> inv_std(m.rows());
  for (std::size_t r = 0; r < m.rows(); ++r) {
    auto in = m.row(r);
    double mean = 0.0;
    for (double v : in) mean += v;
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (double v : in) var += (v - mean) * (v - mean);
    var /= static_cast<double>(n);
    const double is = 1.0 / std::sqrt(var + eps);
    inv_std[r] = is;
    auto nr = normalized.row(r);
    auto o = out.row(r);
    for (std::size_t c = 0; c < n; ++c) {
      nr[c] = (in[c] - mean) * is;
      o[c] = nr[c] * gain[c] + bias[c];
    }
  }
  if (cache) {
    cache->normalized = std::move(normalized);
    cache->inv_std = std::move(inv_std);
  }
  return out;
}

Matrix layer_norm_rows_backward(const Matrix& dout, const LayerNormCache& cache,
                                std::span<const double> gain, std::span<double> dgain,
                                std::span<double> dbias) {
  const Matrix& xhat = cache.normalized;
  require_same_shape(dout, xhat, "layer_norm_rows_backward");
  const std::size_t n = xhat.cols();
  const double inv_n = 1.0 / static_cast<double>(n);
  Matrix dx(xhat.rows(), n);
  std::vector<double> dxhat(n);
  for (std::size_t r = 0; r < xhat.rows(); ++r) {
    auto d = dout.row(r);
    auto xh = xhat.row(r);
    double sum_dxhat = 0.0;
    double sum_dxhat_xhat = 0.0;
    for (std::size_t c = 0; c < n; ++c) {
      dgain[c] += d[c] * xh[c];
      dbias[c] += d[c];
      dxhat[c] = d[c] * gain[c];
      sum_dxhat += dxhat[c];
      sum_dxhat_xhat += dxhat[c] * xh[c];
    }
    auto out = dx.row(r);
    for (std::size_t c = 0; c < n; ++c) {
      out[c] = cache.inv_std[r] * (dxhat[c] - inv_n * sum_dxhat - xh[c] * inv_n * sum_dxhat_xhat);
    }
  }
  return dx;
}

namespace {
constexpr double kGeluCubic = 0.044715;
const double kSqrt2OverPi = std::sqrt(2.0 / std::numbers::pi);
}  // namespace

double gelu(double x) {
  const double inner = kSqrt2OverPi * (x + kGeluCubic * x * x * x);
  return 0.5 * x * (1.0 + std::tanh(inner));
}

double gelu_derivative(double x) {
  const double inner = kSqrt2OverPi * (x + kGeluCubic * x * x * x);
  const double t = std::tanh(inner);
  const double dinner = kSqrt2OverPi * (1.0 + 3.0 * kGeluCubic * x * x);
  return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * dinner;
}

Matrix gelu_map(const Matrix& m) {
  Matrix out(m.rows(), m.cols());
  for (std::size_t i = 0; i < m.size(); ++i) out.flat()[i] = gelu(m.flat()[i]);
  return out;
}

Matrix gelu_map_backward(const Matrix& x, const Matrix& dout) {
  require_same_shape(x, dout, "gelu_map_backward");
  Matrix dx(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.size(); ++i) {
    dx.flat()[i] = dout.flat()[i] * gelu_derivative(x.flat()[i]);
  }
  return dx;
}

namespace {

void check_labels(const Matrix& logits, std::span<const int> labels) {
  if (labels.size() != logits.rows()) {
    throw DimensionError("cross_entropy_logits: " + std::to_string(labels.size()) +
                         " labels for logits " + logits.shape());
  }
  for (std::size_t r = 0; r < labels.size(); ++r) {
    if (labels[r] < 0 || static_cast<std::size_t>(labels[r]) >= logits.cols()) {
      throw IndexError("cross_entropy_logits: label " + std::to_string(labels[r]) + " at row " +
                       std::to_string(r) + " outside [0, " + std::to_string(logits.cols()) + ")");
    }
  }
}

}  // namespace

double cross_entropy_logits(const Matrix& logits, std::span<const int> labels) {
  check_labels(logits, labels);
  double total = 0.0;
  for (std::size_t r = 0; r < logits.rows(); ++r) {
    auto row = logits.row(r);
    const double peak = *std::max_element(row.begin(), row.end());
    double sum = 0.0;
    for (double v : row) sum += std::exp(v - peak);
    const double log_z = peak + std::log(sum);
    total += log_z - row[static_cast<std::size_t>(labels[r])];
  }
  return total / static_cast<double>(logits.rows());
}

Matrix cross_entropy_logits_backward(const Matrix& logits, std::span<const int> labels) {
  check_labels(logits, labels);
  Matrix grad = softmax_rows(logits);
  const double scale = 1.0 / static_cast<double>(logits.rows());
  for (std::size_t r = 0; r < grad.rows(); ++r) {
    grad(r, static_cast<std::size_t>(labels[r])) -= 1.0;
    for (double& v : grad.row(r)) v *= scale;
  }
  return grad;
}

std::size_t argmax(std::span<const double> v) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i) {
    if (v[i] > v[best]) best = i;
  }
  return best;
}

}  // namespace evovit
