// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "lgdea/autodiff.hpp"
#include "lgdea/matrix.hpp"

namespace lgdea {

/// H_R: mean of a report's evidence embeddings, L2-normalized. A zero mean
/// (antipodal phrases) stays a zero row, flagged degenerate downstream.
Var aggregate_report(const Var& phrase_z_rows);

/// H_I: mean of the projected lesion rows, L2-normalized.
Var aggregate_image(const Var& v_phi_rows);

struct PropagationGraphs {
  Matrix s_img;  // N_I x N_I, row-stochastic, zero diagonal
  Matrix s_txt;  // N_R x N_R, row-stochastic, zero diagonal
};

/// Intra-modal evidence graphs: cosine similarities, self masked out, rows
/// softmax-normalized at temperature tau_g. Requires >= 2 rows per side.
PropagationGraphs build_graphs(const Matrix& h_img, const Matrix& h_rep, double tau_g);

/// Residual label propagation: P(0) = Y; P <- S_I P S_T + Y, `steps` times;
/// then row-normalized. All-zero rows stay zero.
Matrix propagate(const Matrix& y, const Matrix& s_img, const Matrix& s_txt, int steps);

/// P-weighted bidirectional soft contrastive loss over evidence aggregates.
/// P is fixed supervision (no gradient); zero rows contribute nothing.
Var loss_evidence_align(const Var& h_img, const Var& h_rep, const Matrix& p, double tau_2);

/// Symmetric InfoNCE over L2-normalized global embeddings with matched
/// ordering (i-th image pairs with i-th report). The ablation baseline.
Var loss_global(const Var& image_globals, const Var& report_globals, double tau_1);

int count_zero_rows(const Matrix& m);

}  // namespace lgdea
