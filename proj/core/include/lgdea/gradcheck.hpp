// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <string>
#include <vector>

#include "lgdea/autodiff.hpp"
#include "lgdea/matrix.hpp"

namespace lgdea {

/// Builds a fresh scalar loss graph from the given leaves. Must be
/// deterministic: two calls on the same values produce the same loss.
using LossFn = std::function<Var(const std::vector<Var>&)>;

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t worst_param = 0;
  std::size_t worst_index = 0;
  double analytic_at_worst = 0.0;
  double numeric_at_worst = 0.0;
};

/// Central-difference check of reverse-mode gradients. Rebuilds the graph
/// once for the analytic pass and twice per parameter entry for the numeric
/// pass. Returns max over entries of
///   |analytic - central_difference| / max(1, |central_difference|).
/// step must lie in (0, 1e-2].
GradCheckReport check_gradients_report(const LossFn& loss_fn, const std::vector<Matrix>& params,
                                       double step = 1e-5);
double check_gradients(const LossFn& loss_fn, const std::vector<Matrix>& params,
                       double step = 1e-5);

}  // namespace lgdea
