// SPDX-License-Identifier: Apache-2.0
#include "lgdea/matrix.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "lgdea/errors.hpp"

namespace lgdea {

Matrix::Matrix(std::size_t rows, std::size_t cols)
    : rows_(rows), cols_(cols), data_(rows * cols, 0.0) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows_ * cols_) {
    throw DimensionError("Matrix: data length " + std::to_string(data_.size()) +
                         " does not match " + std::to_string(rows_) + "x" +
                         std::to_string(cols_));
  }
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m.at(i, i) = 1.0;
  return m;
}

Matrix Matrix::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  std::size_t r = rows.size();
  std::size_t c = r > 0 ? rows.begin()->size() : 0;
  Matrix m(r, c);
  std::size_t i = 0;
  for (const auto& row : rows) {
    if (row.size() != c) throw DimensionError("Matrix::from_rows: ragged rows");
    std::size_t j = 0;
    for (double v : row) m.at(i, j++) = v;
    ++i;
  }
  return m;
}

double Matrix::scalar() const {
  if (!is_scalar()) {
    throw DimensionError("Matrix::scalar: matrix is " + std::to_string(rows_) + "x" +
                         std::to_string(cols_) + ", expected 1x1");
  }
  return data_[0];
}

bool Matrix::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

void Matrix::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

Matrix Matrix::transposed() const {
  Matrix t(cols_, rows_);
  for (std::size_t i = 0; i < rows_; ++i)
    for (std::size_t j = 0; j < cols_; ++j) t.at(j, i) = at(i, j);
  return t;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) {
    throw DimensionError("matmul: " + std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
                         " * " + std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
  }
  Matrix out(a.rows(), b.cols());
  const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
  for (std::size_t i = 0; i < n; ++i) {
    double* out_row = out.data() + i * m;
    const double* a_row = a.data() + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a_row[p];
      if (av == 0.0) continue;
      const double* b_row = b.data() + p * m;
      for (std::size_t j = 0; j < m; ++j) out_row[j] += av * b_row[j];
    }
  }
  return out;
}

Matrix add(const Matrix& a, const Matrix& b) {
  if (!a.same_shape(b)) throw DimensionError("add: shape mismatch");
  Matrix out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b[i];
  return out;
}

Matrix sub(const Matrix& a, const Matrix& b) {
  if (!a.same_shape(b)) throw DimensionError("sub: shape mismatch");
  Matrix out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b[i];
  return out;
}

Matrix scale(const Matrix& a, double c) {
  Matrix out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= c;
  return out;
}

Matrix row_softmax(const Matrix& x, double tau) {
  if (!(tau > 0.0)) throw ParameterError("row_softmax: tau must be positive");
  Matrix out(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    auto in = x.row(i);
    auto o = out.row(i);
    double mx = -std::numeric_limits<double>::infinity();
    for (double v : in) mx = std::max(mx, v / tau);
    double sum = 0.0;
    for (std::size_t j = 0; j < in.size(); ++j) {
      o[j] = std::exp(in[j] / tau - mx);
      sum += o[j];
    }
    for (std::size_t j = 0; j < in.size(); ++j) o[j] /= sum;
  }
  return out;
}

namespace {
double row_norm(std::span<const double> r) {
  double s = 0.0;
  for (double v : r) s += v * v;
  return std::sqrt(s);
}
}  // namespace

Matrix cosine_rows(const Matrix& a, const Matrix& b, double eps) {
  if (a.cols() != b.cols()) throw DimensionError("cosine_rows: column mismatch");
  Matrix out(a.rows(), b.rows());
  std::vector<double> bn(b.rows());
  for (std::size_t j = 0; j < b.rows(); ++j) bn[j] = std::max(row_norm(b.row(j)), eps);
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const double an = std::max(row_norm(a.row(i)), eps);
    for (std::size_t j = 0; j < b.rows(); ++j) {
      double dot = 0.0;
      for (std::size_t c = 0; c < a.cols(); ++c) dot += a.at(i, c) * b.at(j, c);
      out.at(i, j) = std::clamp(dot / (an * bn[j]), -1.0, 1.0);
    }
  }
  return out;
}

Matrix l2_normalize_rows(const Matrix& x, double eps) {
  Matrix out = x;
  for (std::size_t i = 0; i < x.rows(); ++i) {
    const double n = row_norm(x.row(i));
    if (n < eps) {
      for (double& v : out.row(i)) v = 0.0;
    } else {
      for (double& v : out.row(i)) v /= n;
    }
  }
  return out;
}

Matrix mean_rows(const Matrix& x) {
  if (x.rows() == 0) throw DimensionError("mean_rows: empty matrix");
  Matrix out(1, x.cols());
  for (std::size_t i = 0; i < x.rows(); ++i)
    for (std::size_t j = 0; j < x.cols(); ++j) out.at(0, j) += x.at(i, j);
  for (std::size_t j = 0; j < x.cols(); ++j) out.at(0, j) /= static_cast<double>(x.rows());
  return out;
}

Matrix normalize_rows_to_sum(const Matrix& x) {
  Matrix out = x;
  for (std::size_t i = 0; i < x.rows(); ++i) {
    double s = 0.0;
    for (double v : x.row(i)) s += v;
    if (s != 0.0) {
      for (double& v : out.row(i)) v /= s;
    }
  }
  return out;
}

double max_abs_diff(const Matrix& a, const Matrix& b) {
  if (!a.same_shape(b)) throw DimensionError("max_abs_diff: shape mismatch");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace lgdea
