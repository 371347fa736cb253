// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <vector>

#include "lgdea/autodiff.hpp"
#include "lgdea/matrix.hpp"

namespace lgdea {

/// Row-wise soft assignment of embeddings onto the prototype bank:
/// row_softmax(Z mu^T / tau). Every input row must have positive norm.
Var assign_rows(const Var& z_rows, const Var& prototypes, double tau);

/// Single-row convenience wrapper with the same contract.
Var soft_assign(const Var& z, const Var& prototypes, double tau);

/// sum_n ||z_n - sum_k p(k|z_n) mu_k||^2 + lambda_reg * sum_k ||mu_k||^2.
Var loss_rec(const Var& z_rows, const Var& prototypes, double tau_t, double lambda_reg);
/// Degenerate no-evidence case: regularizer only.
Var loss_rec_regularizer_only(const Var& prototypes, double lambda_reg);

/// Q_I rows: soft assignment of projected lesions at temperature tau_p.
Var lesion_distributions(const Var& v_phi, const Var& prototypes, double tau_p);

/// Mean over lesion rows -> image-level diagnostic distribution (1 x K).
Var aggregate_image_distribution(const Var& q_rows);

/// Mean of per-phrase assignments -> report-induced distribution (1 x K).
Var report_distribution(const Var& phrase_z_rows, const Var& prototypes, double tau_t);

/// KL(teacher || student) with the teacher detached: gradient reaches only
/// the student path.
Var loss_paired_evidence(const Var& teacher, const Var& student, double eps = 1e-12);
Var loss_paired_evidence(const Matrix& teacher, const Var& student, double eps = 1e-12);

struct KnnResult {
  int k = 0;
  std::vector<std::vector<int>> neighbors;    // per row, k indices, self excluded
  std::vector<std::vector<double>> weights;   // softmax over the k cosines
};

/// k largest-cosine neighbors per row (ties broken by lower index). Requires
/// k >= 1 and k < rows.
KnnResult knn_neighbors(const Matrix& v_all, int k);

/// (1/N) sum_i sum_{j in N_k(i)} w_ij KL(Q_i || stopgrad(Q_j)). The targets
/// are the current values of q_all (stop-gradient semantics).
Var loss_unpaired_evidence(const Var& q_all, const KnnResult& nn, double eps = 1e-12);
/// Variant with explicitly pinned targets; the finite-difference oracle uses
/// this to hold the severed branch constant.
Var loss_unpaired_evidence(const Var& q_all, const KnnResult& nn, const Matrix& targets,
                           double eps = 1e-12);

/// Deterministic pairwise-tree sum of scalar terms.
Var sum_vars(std::vector<Var> terms);

}  // namespace lgdea
