// SPDX-License-Identifier: Apache-2.0
#include "lgdea/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <unordered_set>
#include <utility>

#include "lgdea/errors.hpp"

namespace lgdea {

namespace detail {
struct Node {
  Matrix value;
  Matrix grad;  // same shape, zero-initialized
  bool requires_grad = false;
  std::vector<Var> parents;
  // Pulls this node's gradient into its parents' gradient slots.
  std::function<void(const Matrix&, std::vector<Var>&)> pull;
};
}  // namespace detail

using detail::Node;

Node& node_of(const Var& v) {
  if (!v.node_) throw InputError("Var: empty handle");
  return *v.node_;
}

Var Var::leaf(Matrix value, bool requires_grad) {
  Var v;
  v.node_ = std::make_shared<Node>();
  v.node_->grad = Matrix(value.rows(), value.cols());
  v.node_->value = std::move(value);
  v.node_->requires_grad = requires_grad;
  return v;
}

const Matrix& Var::value() const { return node_of(*this).value; }
const Matrix& Var::grad() const { return node_of(*this).grad; }
bool Var::requires_grad() const { return node_of(*this).requires_grad; }
void Var::zero_grad() { node_of(*this).grad.fill(0.0); }

/// Internal constructor for non-leaf nodes. The node requires grad iff any
/// parent does; otherwise parents and the pull closure are dropped so dead
/// subgraphs cost nothing on backward.
Var make_op(Matrix value, std::vector<Var> parents,
            std::function<void(const Matrix&, std::vector<Var>&)> pull) {
  Var v;
  v.node_ = std::make_shared<Node>();
  v.node_->grad = Matrix(value.rows(), value.cols());
  v.node_->value = std::move(value);
  bool needs = false;
  for (const Var& p : parents) needs = needs || p.requires_grad();
  v.node_->requires_grad = needs;
  if (needs) {
    v.node_->parents = std::move(parents);
    v.node_->pull = std::move(pull);
  }
  return v;
}

namespace {
void add_grad(const Var& v, const Matrix& delta) {
  Node& n = node_of(v);
  if (!n.requires_grad) return;
  if (!n.grad.same_shape(delta)) throw DimensionError("add_grad: gradient shape mismatch");
  for (std::size_t i = 0; i < n.grad.size(); ++i) n.grad[i] += delta[i];
}
}  // namespace

void backward(const Var& loss) {
  const Matrix& lv = loss.value();
  if (!lv.is_scalar()) {
    throw InputError("backward: loss must be 1x1, got " + std::to_string(lv.rows()) + "x" +
                     std::to_string(lv.cols()));
  }
  // Topological order by iterative post-order DFS.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack;
  Node* root = &node_of(loss);
  if (!root->requires_grad) return;
  stack.emplace_back(root, 0);
  visited.insert(root);
  while (!stack.empty()) {
    auto& [node, idx] = stack.back();
    if (idx < node->parents.size()) {
      Node* parent = &node_of(node->parents[idx]);
      ++idx;
      if (parent->requires_grad && visited.insert(parent).second) {
        stack.emplace_back(parent, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  root->grad[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* node = *it;
    if (node->pull) node->pull(node->grad, node->parents);
  }
}

// -- operations ---------------------------------------------------------------

Var matmul(const Var& a, const Var& b) {
  Matrix out = matmul(a.value(), b.value());
  return make_op(std::move(out), {a, b}, [](const Matrix& g, std::vector<Var>& ps) {
    const Matrix& av = ps[0].value();
    const Matrix& bv = ps[1].value();
    if (ps[0].requires_grad()) add_grad(ps[0], matmul(g, bv.transposed()));
    if (ps[1].requires_grad()) add_grad(ps[1], matmul(av.transposed(), g));
  });
}

Var transpose(const Var& x) {
  return make_op(x.value().transposed(), {x}, [](const Matrix& g, std::vector<Var>& ps) {
    add_grad(ps[0], g.transposed());
  });
}

Var add(const Var& a, const Var& b) {
  Matrix out = add(a.value(), b.value());
  return make_op(std::move(out), {a, b}, [](const Matrix& g, std::vector<Var>& ps) {
    add_grad(ps[0], g);
    add_grad(ps[1], g);
  });
}

Var sub(const Var& a, const Var& b) {
  Matrix out = sub(a.value(), b.value());
  return make_op(std::move(out), {a, b}, [](const Matrix& g, std::vector<Var>& ps) {
    add_grad(ps[0], g);
    add_grad(ps[1], scale(g, -1.0));
  });
}

Var scale(const Var& x, double c) {
  return make_op(scale(x.value(), c), {x}, [c](const Matrix& g, std::vector<Var>& ps) {
    add_grad(ps[0], scale(g, c));
  });
}

Var row_softmax(const Var& x, double tau) {
  Matrix y = row_softmax(x.value(), tau);
  return make_op(y, {x}, [y, tau](const Matrix& g, std::vector<Var>& ps) {
    // dx_ij = (y_ij / tau) * (g_ij - sum_k g_ik y_ik)
    Matrix dx(y.rows(), y.cols());
    for (std::size_t i = 0; i < y.rows(); ++i) {
      double dot = 0.0;
      for (std::size_t k = 0; k < y.cols(); ++k) dot += g.at(i, k) * y.at(i, k);
      for (std::size_t j = 0; j < y.cols(); ++j)
        dx.at(i, j) = y.at(i, j) / tau * (g.at(i, j) - dot);
    }
    add_grad(ps[0], dx);
  });
}

Var row_log_softmax(const Var& x, double tau) {
  if (!(tau > 0.0)) throw ParameterError("row_log_softmax: tau must be positive");
  const Matrix& xv = x.value();
  Matrix out(xv.rows(), xv.cols());
  Matrix soft(xv.rows(), xv.cols());
  for (std::size_t i = 0; i < xv.rows(); ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < xv.cols(); ++j) mx = std::max(mx, xv.at(i, j) / tau);
    double sum = 0.0;
    for (std::size_t j = 0; j < xv.cols(); ++j) sum += std::exp(xv.at(i, j) / tau - mx);
    const double lse = mx + std::log(sum);
    for (std::size_t j = 0; j < xv.cols(); ++j) {
      out.at(i, j) = xv.at(i, j) / tau - lse;
      soft.at(i, j) = std::exp(out.at(i, j));
    }
  }
  return make_op(std::move(out), {x}, [soft, tau](const Matrix& g, std::vector<Var>& ps) {
    // dx_ij = (g_ij - s_ij * sum_k g_ik) / tau
    Matrix dx(soft.rows(), soft.cols());
    for (std::size_t i = 0; i < soft.rows(); ++i) {
      double rowsum = 0.0;
      for (std::size_t k = 0; k < soft.cols(); ++k) rowsum += g.at(i, k);
      for (std::size_t j = 0; j < soft.cols(); ++j)
        dx.at(i, j) = (g.at(i, j) - soft.at(i, j) * rowsum) / tau;
    }
    add_grad(ps[0], dx);
  });
}

Var kl_divergence(const Var& p, const Var& q, double eps) {
  if (!(eps > 0.0)) throw ParameterError("kl_divergence: eps must be positive");
  const Matrix& pv = p.value();
  const Matrix& qv = q.value();
  if (!pv.same_shape(qv)) throw DimensionError("kl_divergence: shape mismatch");
  double total = 0.0;
  for (std::size_t i = 0; i < pv.size(); ++i)
    total += pv[i] * (std::log(pv[i] + eps) - std::log(qv[i] + eps));
  Matrix out(1, 1);
  out[0] = total;
  return make_op(std::move(out), {p, q}, [eps](const Matrix& g, std::vector<Var>& ps) {
    const double gs = g[0];
    const Matrix& pv = ps[0].value();
    const Matrix& qv = ps[1].value();
    if (ps[0].requires_grad()) {
      Matrix dp(pv.rows(), pv.cols());
      for (std::size_t i = 0; i < pv.size(); ++i)
        dp[i] = gs * (std::log(pv[i] + eps) - std::log(qv[i] + eps) + pv[i] / (pv[i] + eps));
      add_grad(ps[0], dp);
    }
    if (ps[1].requires_grad()) {
      Matrix dq(qv.rows(), qv.cols());
      for (std::size_t i = 0; i < qv.size(); ++i) dq[i] = -gs * pv[i] / (qv[i] + eps);
      add_grad(ps[1], dq);
    }
  });
}

Var attention(const Var& q, const Var& k, const Var& v, double tau) {
  if (q.cols() != k.cols()) throw DimensionError("attention: query/key width mismatch");
  if (k.rows() != v.rows()) throw DimensionError("attention: key/value count mismatch");
  Var weights = row_softmax(matmul(q, transpose(k)), tau);
  return matmul(weights, v);
}

Var mean_rows(const Var& x) {
  Matrix out = mean_rows(x.value());
  const std::size_t n = x.rows();
  return make_op(std::move(out), {x}, [n](const Matrix& g, std::vector<Var>& ps) {
    Matrix dx(n, g.cols());
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < g.cols(); ++j) dx.at(i, j) = g.at(0, j) / static_cast<double>(n);
    add_grad(ps[0], dx);
  });
}

Var sum_squares(const Var& x) {
  const Matrix& xv = x.value();
  double total = 0.0;
  for (std::size_t i = 0; i < xv.size(); ++i) total += xv[i] * xv[i];
  Matrix out(1, 1);
  out[0] = total;
  return make_op(std::move(out), {x}, [](const Matrix& g, std::vector<Var>& ps) {
    add_grad(ps[0], scale(ps[0].value(), 2.0 * g[0]));
  });
}

Var weighted_sum(const Var& x, const Matrix& w) {
  const Matrix& xv = x.value();
  if (!xv.same_shape(w)) throw DimensionError("weighted_sum: weight shape mismatch");
  double total = 0.0;
  for (std::size_t i = 0; i < xv.size(); ++i) total += xv[i] * w[i];
  Matrix out(1, 1);
  out[0] = total;
  return make_op(std::move(out), {x}, [w](const Matrix& g, std::vector<Var>& ps) {
    add_grad(ps[0], scale(w, g[0]));
  });
}

Var gather_rows(const Var& table, const std::vector<int>& ids) {
  const Matrix& tv = table.value();
  if (ids.empty()) throw InputError("gather_rows: empty index list");
  Matrix out(ids.size(), tv.cols());
  for (std::size_t r = 0; r < ids.size(); ++r) {
    if (ids[r] < 0 || static_cast<std::size_t>(ids[r]) >= tv.rows())
      throw InputError("gather_rows: index " + std::to_string(ids[r]) + " out of range");
    for (std::size_t j = 0; j < tv.cols(); ++j) out.at(r, j) = tv.at(ids[r], j);
  }
  return make_op(std::move(out), {table}, [ids](const Matrix& g, std::vector<Var>& ps) {
    Matrix dt(ps[0].value().rows(), ps[0].value().cols());
    for (std::size_t r = 0; r < ids.size(); ++r)
      for (std::size_t j = 0; j < g.cols(); ++j) dt.at(ids[r], j) += g.at(r, j);
    add_grad(ps[0], dt);
  });
}

Var concat_rows(const std::vector<Var>& parts) {
  if (parts.empty()) throw InputError("concat_rows: no parts");
  const std::size_t cols = parts[0].cols();
  std::size_t rows = 0;
  for (const Var& p : parts) {
    if (p.cols() != cols) throw DimensionError("concat_rows: column mismatch");
    rows += p.rows();
  }
  Matrix out(rows, cols);
  std::size_t r = 0;
  for (const Var& p : parts) {
    const Matrix& pv = p.value();
    for (std::size_t i = 0; i < pv.rows(); ++i, ++r)
      for (std::size_t j = 0; j < cols; ++j) out.at(r, j) = pv.at(i, j);
  }
  return make_op(std::move(out), parts, [](const Matrix& g, std::vector<Var>& ps) {
    std::size_t r = 0;
    for (Var& p : ps) {
      const std::size_t nr = p.rows();
      if (p.requires_grad()) {
        Matrix dp(nr, g.cols());
        for (std::size_t i = 0; i < nr; ++i)
          for (std::size_t j = 0; j < g.cols(); ++j) dp.at(i, j) = g.at(r + i, j);
        add_grad(p, dp);
      }
      r += nr;
    }
  });
}

Var slice_rows(const Var& x, std::size_t begin, std::size_t count) {
  const Matrix& xv = x.value();
  if (begin + count > xv.rows()) throw DimensionError("slice_rows: range out of bounds");
  Matrix out(count, xv.cols());
  for (std::size_t i = 0; i < count; ++i)
    for (std::size_t j = 0; j < xv.cols(); ++j) out.at(i, j) = xv.at(begin + i, j);
  return make_op(std::move(out), {x}, [begin, count](const Matrix& g, std::vector<Var>& ps) {
    Matrix dx(ps[0].value().rows(), ps[0].value().cols());
    for (std::size_t i = 0; i < count; ++i)
      for (std::size_t j = 0; j < g.cols(); ++j) dx.at(begin + i, j) = g.at(i, j);
    add_grad(ps[0], dx);
  });
}

Var l2_normalize_rows(const Var& x, double eps) {
  const Matrix& xv = x.value();
  Matrix out(xv.rows(), xv.cols());
  std::vector<double> norms(xv.rows());
  for (std::size_t i = 0; i < xv.rows(); ++i) {
    double s = 0.0;
    for (double v : xv.row(i)) s += v * v;
    norms[i] = std::sqrt(s);
    if (norms[i] >= eps)
      for (std::size_t j = 0; j < xv.cols(); ++j) out.at(i, j) = xv.at(i, j) / norms[i];
  }
  return make_op(std::move(out), {x},
                 [norms, eps](const Matrix& g, std::vector<Var>& ps) {
                   // dx_k = (g_k - y_k * <g, y>) / n per row; degenerate rows
                   // (n < eps) output zero and pass no gradient.
                   const Matrix& xv = ps[0].value();
                   Matrix dx(xv.rows(), xv.cols());
                   for (std::size_t i = 0; i < xv.rows(); ++i) {
                     const double n = norms[i];
                     if (n < eps) continue;
                     double dot = 0.0;
                     for (std::size_t j = 0; j < xv.cols(); ++j)
                       dot += g.at(i, j) * xv.at(i, j) / n;
                     for (std::size_t j = 0; j < xv.cols(); ++j)
                       dx.at(i, j) = (g.at(i, j) - xv.at(i, j) / n * dot) / n;
                   }
                   add_grad(ps[0], dx);
                 });
}

Var stopgrad(const Var& x) { return Var::constant(x.value()); }

}  // namespace lgdea
