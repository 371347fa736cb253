// SPDX-License-Identifier: Apache-2.0
#include "lgdea/evidence_space.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "lgdea/errors.hpp"

namespace lgdea {

Var assign_rows(const Var& z_rows, const Var& prototypes, double tau) {
  const Matrix& zv = z_rows.value();
  for (std::size_t i = 0; i < zv.rows(); ++i) {
    double norm = 0.0;
    for (double v : zv.row(i)) norm += v * v;
    if (norm == 0.0) throw InputError("assign_rows: degenerate zero embedding row");
  }
  return row_softmax(matmul(z_rows, transpose(prototypes)), tau);
}

Var soft_assign(const Var& z, const Var& prototypes, double tau) {
  if (z.rows() != 1) throw DimensionError("soft_assign: expected a single row");
  return assign_rows(z, prototypes, tau);
}

Var loss_rec(const Var& z_rows, const Var& prototypes, double tau_t, double lambda_reg) {
  Var assignment = assign_rows(z_rows, prototypes, tau_t);
  Var reconstruction = matmul(assignment, prototypes);
  Var residual = sum_squares(sub(z_rows, reconstruction));
  return add(residual, scale(sum_squares(prototypes), lambda_reg));
}

Var loss_rec_regularizer_only(const Var& prototypes, double lambda_reg) {
  return scale(sum_squares(prototypes), lambda_reg);
}

Var lesion_distributions(const Var& v_phi, const Var& prototypes, double tau_p) {
  if (v_phi.cols() != prototypes.cols())
    throw DimensionError("lesion_distributions: embedding width mismatch");
  return row_softmax(matmul(v_phi, transpose(prototypes)), tau_p);
}

Var aggregate_image_distribution(const Var& q_rows) { return mean_rows(q_rows); }

Var report_distribution(const Var& phrase_z_rows, const Var& prototypes, double tau_t) {
  return mean_rows(assign_rows(phrase_z_rows, prototypes, tau_t));
}

Var loss_paired_evidence(const Var& teacher, const Var& student, double eps) {
  return kl_divergence(stopgrad(teacher), student, eps);
}

Var loss_paired_evidence(const Matrix& teacher, const Var& student, double eps) {
  return kl_divergence(Var::constant(teacher), student, eps);
}

KnnResult knn_neighbors(const Matrix& v_all, int k) {
  const int n = static_cast<int>(v_all.rows());
  if (k < 1 || k >= n)
    throw ConfigError("knn_neighbors: k must satisfy 1 <= k < rows (k=" + std::to_string(k) +
                      ", rows=" + std::to_string(n) + ")");
  Matrix cos = cosine_rows(v_all, v_all);
  KnnResult result;
  result.k = k;
  result.neighbors.resize(n);
  result.weights.resize(n);
  std::vector<int> order(n);
  for (int i = 0; i < n; ++i) {
    order.clear();
    for (int j = 0; j < n; ++j)
      if (j != i) order.push_back(j);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
      if (cos.at(i, a) != cos.at(i, b)) return cos.at(i, a) > cos.at(i, b);
      return a < b;
    });
    order.resize(k);
    result.neighbors[i] = order;
    // Softmax over the k cosine values.
    double mx = -2.0;
    for (int j : order) mx = std::max(mx, cos.at(i, j));
    double sum = 0.0;
    std::vector<double> w(k);
    for (int t = 0; t < k; ++t) {
      w[t] = std::exp(cos.at(i, order[t]) - mx);
      sum += w[t];
    }
    for (int t = 0; t < k; ++t) w[t] /= sum;
    result.weights[i] = std::move(w);
  }
  return result;
}

Var sum_vars(std::vector<Var> terms) {
  if (terms.empty()) return Var::constant(Matrix(1, 1));
  while (terms.size() > 1) {
    std::vector<Var> next;
    next.reserve((terms.size() + 1) / 2);
    for (std::size_t i = 0; i + 1 < terms.size(); i += 2) next.push_back(add(terms[i], terms[i + 1]));
    if (terms.size() % 2 == 1) next.push_back(terms.back());
    terms = std::move(next);
  }
  return terms[0];
}

Var loss_unpaired_evidence(const Var& q_all, const KnnResult& nn, const Matrix& targets,
                           double eps) {
  const std::size_t n = q_all.rows();
  if (targets.rows() != n || targets.cols() != q_all.cols())
    throw DimensionError("loss_unpaired_evidence: target shape mismatch");
  if (nn.neighbors.size() != n)
    throw DimensionError("loss_unpaired_evidence: neighbor structure size mismatch");
  std::vector<Var> terms;
  terms.reserve(n * static_cast<std::size_t>(nn.k));
  for (std::size_t i = 0; i < n; ++i) {
    Var q_i = slice_rows(q_all, i, 1);
    for (std::size_t t = 0; t < nn.neighbors[i].size(); ++t) {
      const int j = nn.neighbors[i][t];
      Matrix target_row(1, targets.cols());
      for (std::size_t c = 0; c < targets.cols(); ++c)
        target_row.at(0, c) = targets.at(static_cast<std::size_t>(j), c);
      Var kl = kl_divergence(q_i, Var::constant(target_row), eps);
      terms.push_back(scale(kl, nn.weights[i][t]));
    }
  }
  return scale(sum_vars(std::move(terms)), 1.0 / static_cast<double>(n));
}

Var loss_unpaired_evidence(const Var& q_all, const KnnResult& nn, double eps) {
  return loss_unpaired_evidence(q_all, nn, q_all.value(), eps);
}

}  // namespace lgdea
