// SPDX-License-Identifier: Apache-2.0
#include "lgdea/gradcheck.hpp"

#include <cmath>

#include "lgdea/errors.hpp"

namespace lgdea {

namespace {
std::vector<Var> make_leaves(const std::vector<Matrix>& params, bool requires_grad) {
  std::vector<Var> leaves;
  leaves.reserve(params.size());
  for (const Matrix& p : params) leaves.push_back(Var::leaf(p, requires_grad));
  return leaves;
}

double eval_loss(const LossFn& loss_fn, const std::vector<Matrix>& params) {
  std::vector<Var> leaves = make_leaves(params, false);
  return loss_fn(leaves).value().scalar();
}
}  // namespace

GradCheckReport check_gradients_report(const LossFn& loss_fn, const std::vector<Matrix>& params,
                                       double step) {
  if (!(step > 0.0) || step > 1e-2)
    throw ParameterError("check_gradients: step must lie in (0, 1e-2]");

  std::vector<Var> leaves = make_leaves(params, true);
  Var loss = loss_fn(leaves);
  backward(loss);
  std::vector<Matrix> analytic;
  analytic.reserve(leaves.size());
  for (const Var& l : leaves) analytic.push_back(l.grad());

  GradCheckReport rep;
  std::vector<Matrix> probe = params;
  for (std::size_t p = 0; p < probe.size(); ++p) {
    for (std::size_t i = 0; i < probe[p].size(); ++i) {
      const double orig = probe[p][i];
      probe[p][i] = orig + step;
      const double up = eval_loss(loss_fn, probe);
      probe[p][i] = orig - step;
      const double down = eval_loss(loss_fn, probe);
      probe[p][i] = orig;
      const double numeric = (up - down) / (2.0 * step);
      const double a = analytic[p][i];
      const double rel = std::abs(a - numeric) / std::max(1.0, std::abs(numeric));
      if (rel > rep.max_rel_error) {
        rep.max_rel_error = rel;
        rep.worst_param = p;
        rep.worst_index = i;
        rep.analytic_at_worst = a;
        rep.numeric_at_worst = numeric;
      }
    }
  }
  return rep;
}

double check_gradients(const LossFn& loss_fn, const std::vector<Matrix>& params, double step) {
  return check_gradients_report(loss_fn, params, step).max_rel_error;
}

}  // namespace lgdea
