// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <random>

#include "lgdea/matrix.hpp"

namespace lgdea::testing {

inline Matrix random_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed, double lo = -1.0,
                            double hi = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(lo, hi);
  Matrix m(rows, cols);
  for (std::size_t i = 0; i < m.size(); ++i) m[i] = dist(rng);
  return m;
}

/// Random row-stochastic matrix (positive entries, rows sum to 1).
inline Matrix random_stochastic(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(0.05, 1.0);
  Matrix m(rows, cols);
  for (std::size_t i = 0; i < rows; ++i) {
    double sum = 0.0;
    for (std::size_t j = 0; j < cols; ++j) {
      m.at(i, j) = dist(rng);
      sum += m.at(i, j);
    }
    for (std::size_t j = 0; j < cols; ++j) m.at(i, j) /= sum;
  }
  return m;
}

}  // namespace lgdea::testing
