// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "lgdea/matrix.hpp"

namespace lgdea {

namespace detail {
struct Node;
}

/// Handle to one node of a reverse-mode differentiation graph. Graphs are
/// built per training step and discarded; a live graph is confined to the
/// thread that built it. Gradients accumulate additively into leaf nodes on
/// backward(); callers re-create leaves (or zero_grad) between steps.
class Var {
 public:
  Var() = default;

  /// Leaf holding a value; participates in gradients iff requires_grad.
  static Var leaf(Matrix value, bool requires_grad = true);
  /// Leaf that never receives gradient.
  static Var constant(Matrix value) { return leaf(std::move(value), false); }

  const Matrix& value() const;
  const Matrix& grad() const;
  bool requires_grad() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
  explicit operator bool() const { return node_ != nullptr; }

  void zero_grad();

 private:
  friend Var make_op(Matrix value, std::vector<Var> parents,
                     std::function<void(const Matrix&, std::vector<Var>&)> pull);
  friend void backward(const Var& loss);
  friend detail::Node& node_of(const Var& v);
  std::shared_ptr<detail::Node> node_;
};

// -- graph-building operations -----------------------------------------------

Var matmul(const Var& a, const Var& b);
Var transpose(const Var& x);
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var scale(const Var& x, double c);

/// Row-wise softmax of x / tau. tau must be positive.
Var row_softmax(const Var& x, double tau);

/// Row-wise log-softmax of x / tau, computed stably.
Var row_log_softmax(const Var& x, double tau);

/// KL(p || q) = sum_ij p_ij * (log(p_ij + eps) - log(q_ij + eps)) as a 1x1
/// scalar. The eps guard keeps one-hot rows finite while perturbing the value
/// by less than 1e-10.
Var kl_divergence(const Var& p, const Var& q, double eps = 1e-12);

/// row_softmax(q k^T / tau) v. Differentiable through q, k, and v.
Var attention(const Var& q, const Var& k, const Var& v, double tau);

Var mean_rows(const Var& x);

/// Frobenius norm squared as a 1x1 scalar.
Var sum_squares(const Var& x);

/// sum_ij w_ij * x_ij as a 1x1 scalar; w is a fixed weight matrix.
Var weighted_sum(const Var& x, const Matrix& w);

/// Selects table rows by index (embedding lookup); backward scatter-adds.
Var gather_rows(const Var& table, const std::vector<int>& ids);

/// Vertical stack; backward splits the upstream gradient.
Var concat_rows(const std::vector<Var>& parts);

Var slice_rows(const Var& x, std::size_t begin, std::size_t count);

/// Rows scaled to unit norm; rows with norm < eps become zero and block
/// gradient (degenerate case).
Var l2_normalize_rows(const Var& x, double eps = 1e-12);

/// Identity on values, severs gradient flow.
Var stopgrad(const Var& x);

/// Reverse sweep from a 1x1 loss node. Accumulates exact reverse-mode
/// gradients into every reachable requires_grad node.
void backward(const Var& loss);

}  // namespace lgdea
