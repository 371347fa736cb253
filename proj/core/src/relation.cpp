// SPDX-License-Identifier: Apache-2.0
#include "lgdea/relation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "lgdea/errors.hpp"

namespace lgdea {

Var aggregate_report(const Var& phrase_z_rows) {
  if (phrase_z_rows.rows() < 1) throw InputError("aggregate_report: no phrases");
  return l2_normalize_rows(mean_rows(phrase_z_rows));
}

Var aggregate_image(const Var& v_phi_rows) {
  if (v_phi_rows.rows() < 1) throw InputError("aggregate_image: no lesion rows");
  return l2_normalize_rows(mean_rows(v_phi_rows));
}

namespace {
/// Softmax over off-diagonal entries of sim / tau; diagonal forced to zero.
Matrix masked_row_softmax(const Matrix& sim, double tau) {
  const std::size_t n = sim.rows();
  Matrix out(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < n; ++j)
      if (j != i) mx = std::max(mx, sim.at(i, j) / tau);
    double sum = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      out.at(i, j) = std::exp(sim.at(i, j) / tau - mx);
      sum += out.at(i, j);
    }
    for (std::size_t j = 0; j < n; ++j)
      if (j != i) out.at(i, j) /= sum;
  }
  return out;
}
}  // namespace

PropagationGraphs build_graphs(const Matrix& h_img, const Matrix& h_rep, double tau_g) {
  if (h_img.rows() < 2 || h_rep.rows() < 2)
    throw ConfigError("build_graphs: need at least two rows per modality");
  if (!(tau_g > 0.0)) throw ParameterError("build_graphs: tau_g must be positive");
  PropagationGraphs graphs;
  graphs.s_img = masked_row_softmax(cosine_rows(h_img, h_img), tau_g);
  graphs.s_txt = masked_row_softmax(cosine_rows(h_rep, h_rep), tau_g);
  return graphs;
}

Matrix propagate(const Matrix& y, const Matrix& s_img, const Matrix& s_txt, int steps) {
  if (steps < 0) throw ParameterError("propagate: steps must be >= 0");
  if (s_img.rows() != s_img.cols() || s_txt.rows() != s_txt.cols())
    throw DimensionError("propagate: propagation matrices must be square");
  if (s_img.rows() != y.rows() || s_txt.rows() != y.cols())
    throw DimensionError("propagate: seed matrix shape disagrees with graphs");
  Matrix p = y;
  for (int t = 0; t < steps; ++t) p = add(matmul(matmul(s_img, p), s_txt), y);
  return normalize_rows_to_sum(p);
}

Var loss_evidence_align(const Var& h_img, const Var& h_rep, const Matrix& p, double tau_2) {
  const std::size_t n_img = h_img.rows();
  const std::size_t n_rep = h_rep.rows();
  if (p.rows() != n_img || p.cols() != n_rep)
    throw DimensionError("loss_evidence_align: relation matrix shape mismatch");
  if (h_img.cols() != h_rep.cols())
    throw DimensionError("loss_evidence_align: embedding width mismatch");
  Var logits = matmul(h_img, transpose(h_rep));  // N_I x N_R
  Var rep_from_img = weighted_sum(row_log_softmax(logits, tau_2), p);
  Var img_from_rep = weighted_sum(row_log_softmax(transpose(logits), tau_2), p.transposed());
  return add(scale(rep_from_img, -1.0 / static_cast<double>(n_img)),
             scale(img_from_rep, -1.0 / static_cast<double>(n_rep)));
}

Var loss_global(const Var& image_globals, const Var& report_globals, double tau_1) {
  const std::size_t b = image_globals.rows();
  if (report_globals.rows() != b)
    throw DimensionError("loss_global: batch sizes differ between modalities");
  Var ni = l2_normalize_rows(image_globals);
  Var nr = l2_normalize_rows(report_globals);
  Var logits = matmul(ni, transpose(nr));
  const Matrix eye = Matrix::identity(b);
  Var rep_from_img = weighted_sum(row_log_softmax(logits, tau_1), eye);
  Var img_from_rep = weighted_sum(row_log_softmax(transpose(logits), tau_1), eye);
  return scale(add(rep_from_img, img_from_rep), -1.0 / static_cast<double>(b));
}

int count_zero_rows(const Matrix& m) {
  int count = 0;
  for (std::size_t i = 0; i < m.rows(); ++i) {
    bool all_zero = true;
    for (double v : m.row(i)) all_zero = all_zero && v == 0.0;
    count += all_zero ? 1 : 0;
  }
  return count;
}

}  // namespace lgdea
