// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

namespace lgdea {

/// Dense row-major matrix of 64-bit floats. The workhorse value type for
/// every embedding, distribution and parameter block in the system.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols);  // zero-filled
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

  static Matrix zeros(std::size_t rows, std::size_t cols) { return Matrix(rows, cols); }
  static Matrix identity(std::size_t n);
  static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }
  bool is_scalar() const { return rows_ == 1 && cols_ == 1; }
  double scalar() const;  // requires 1x1

  double& at(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double at(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  bool same_shape(const Matrix& other) const {
    return rows_ == other.rows_ && cols_ == other.cols_;
  }
  bool all_finite() const;

  void fill(double v);
  Matrix transposed() const;

  bool operator==(const Matrix& other) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

// Pure value-level operations. All throw DimensionError on shape mismatch.
Matrix matmul(const Matrix& a, const Matrix& b);
Matrix add(const Matrix& a, const Matrix& b);
Matrix sub(const Matrix& a, const Matrix& b);
Matrix scale(const Matrix& a, double c);

/// Row-wise softmax of x / tau with max-subtraction for stability.
/// tau must be positive.
Matrix row_softmax(const Matrix& x, double tau);

/// Pairwise cosine similarity between rows of a and rows of b.
/// Zero rows are eps-guarded and have cosine 0 with everything; a row's
/// cosine with itself is exactly 1. Entries clamped to [-1, 1].
Matrix cosine_rows(const Matrix& a, const Matrix& b, double eps = 1e-12);

/// Rows scaled to unit L2 norm; rows with norm < eps stay zero (degenerate).
Matrix l2_normalize_rows(const Matrix& x, double eps = 1e-12);

/// Column means as a single row.
Matrix mean_rows(const Matrix& x);

/// Divide each row by its sum; all-zero rows are left untouched.
Matrix normalize_rows_to_sum(const Matrix& x);

double max_abs_diff(const Matrix& a, const Matrix& b);

}  // namespace lgdea
