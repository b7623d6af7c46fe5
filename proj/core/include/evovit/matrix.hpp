#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "evovit/error.hpp"

namespace evovit {

// Dense row-major matrix of doubles. Vectors are carried as 1 x n matrices
// where a Matrix is needed and as spans elsewhere.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_) {
      throw DimensionError("matrix data length " + std::to_string(data_.size()) +
                           " does not match shape " + shape_string(rows, cols));
    }
  }

  static Matrix from_rows(const std::vector<std::vector<double>>& rows);
  static Matrix identity(std::size_t n);
  static Matrix row_vector(std::span<const double> values);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::span<double> flat() { return data_; }
  std::span<const double> flat() const { return data_; }
  const std::vector<double>& values() const { return data_; }

  void fill(double v);
  bool all_finite() const;
  std::string shape() const { return shape_string(rows_, cols_); }

  static std::string shape_string(std::size_t rows, std::size_t cols) {
    return "(" + std::to_string(rows) + "x" + std::to_string(cols) + ")";
  }

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

// Gathers the listed rows, in order, into a new matrix.
Matrix gather_rows(const Matrix& m, std::span<const std::size_t> indices);

// Elementwise a + b; shapes must match.
Matrix add(const Matrix& a, const Matrix& b);
void add_inplace(Matrix& a, const Matrix& b);

// Largest |a - b| over all entries; shapes must match.
double max_abs_diff(const Matrix& a, const Matrix& b);

}  // namespace evovit
