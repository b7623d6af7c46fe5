#pragma once

#include <cstddef>

#include "evovit/matrix.hpp"

namespace evovit::analysis {

// Linear centered kernel alignment between feature matrices with the same
// number of rows (samples):
//   ||Xc^T Yc||_F^2 / (||Xc^T Xc||_F ||Yc^T Yc||_F)
// with per-column centering. Returns 0 when either centered matrix is zero.
double linear_cka(const Matrix& x, const Matrix& y);

struct PccStats {
  double mean = 0.0;
  double variance = 0.0;  // population variance over pairs
  std::size_t pairs = 0;
  std::size_t constant_rows = 0;  // rows skipped for zero variance
};

// Pearson correlation over the channel dimension for every unordered pair of
// non-constant rows. Throws StateError when fewer than two usable rows remain.
PccStats token_query_pcc(const Matrix& queries);

double pearson(std::span<const double> a, std::span<const double> b);

}  // namespace evovit::analysis
