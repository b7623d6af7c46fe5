#include "evovit/similarity.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "evovit/kernels.hpp"

namespace evovit::analysis {

namespace {

Matrix centered(const Matrix& m) {
  Matrix out = m;
  for (std::size_t c = 0; c < m.cols(); ++c) {
    double mean = 0.0;
    for (std::size_t r = 0; r < m.rows(); ++r) mean += m(r, c);
    mean /= static_cast<double>(m.rows());
    for (std::size_t r = 0; r < m.rows(); ++r) out(r, c) -= mean;
  }
  return out;
}

double frobenius_sq(const Matrix& m) {
  double s = 0.0;
  for (double v : m.flat()) s += v * v;
  return s;
}

}  // namespace

double linear_cka(const Matrix& x, const Matrix& y) {
  if (x.rows() != y.rows()) {
    throw DimensionError("linear_cka: row counts differ, " + x.shape() + " vs " + y.shape());
  }
  if (x.rows() < 2) throw DimensionError("linear_cka needs at least two samples");
  const Matrix xc = centered(x), yc = centered(y);
  const double xx = std::sqrt(frobenius_sq(matmul_tn(xc, xc)));
  const double yy = std::sqrt(frobenius_sq(matmul_tn(yc, yc)));
  if (xx == 0.0 || yy == 0.0) return 0.0;
  const double value = frobenius_sq(matmul_tn(xc, yc)) / (xx * yy);
  return std::clamp(value, 0.0, 1.0);
}

double pearson(std::span<const double> a, std::span<const double> b) {
  const auto n = static_cast<double>(a.size());
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= n;
  mb /= n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

PccStats token_query_pcc(const Matrix& queries) {
  PccStats stats;
  std::vector<std::size_t> usable;
  for (std::size_t r = 0; r < queries.rows(); ++r) {
    auto row = queries.row(r);
    const bool constant = std::all_of(row.begin(), row.end(), [&](double v) { return v == row[0]; });
    if (constant) {
      ++stats.constant_rows;
    } else {
      usable.push_back(r);
    }
  }
  if (usable.size() < 2) {
    throw StateError("token_query_pcc: fewer than two non-constant rows (" +
                     std::to_string(stats.constant_rows) + " constant of " +
                     std::to_string(queries.rows()) + ")");
  }
  std::vector<double> values;
  for (std::size_t i = 0; i < usable.size(); ++i) {
    for (std::size_t j = i + 1; j < usable.size(); ++j) {
      values.push_back(pearson(queries.row(usable[i]), queries.row(usable[j])));
    }
  }
  for (double v : values) stats.mean += v;
  stats.mean /= static_cast<double>(values.size());
  for (double v : values) stats.variance += (v - stats.mean) * (v - stats.mean);
  stats.variance /= static_cast<double>(values.size());
  stats.pairs = values.size();
  return stats;
}

}  // namespace evovit::analysis
