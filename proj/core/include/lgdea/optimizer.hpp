// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "lgdea/encoders.hpp"
#include "lgdea/matrix.hpp"

namespace lgdea {

/// Adaptive moment estimation with decoupled weight decay.
/// beta1 = 0.9, beta2 = 0.999, eps = 1e-8 fixed.
struct AdamWConfig {
  double lr = 1e-3;
  double weight_decay = 1e-6;
  static constexpr double beta1 = 0.9;
  static constexpr double beta2 = 0.999;
  static constexpr double eps = 1e-8;
};

struct AdamWState {
  std::vector<Matrix> m;
  std::vector<Matrix> v;
  std::int64_t t = 0;

  void init_like(const std::vector<ParamBlock>& blocks);
};

/// One update with bias correction; weight decay is applied decoupled from
/// the gradient and skipped for blocks named in no_decay.
void adamw_step(std::vector<ParamBlock>& blocks, const std::vector<Matrix>& grads,
                AdamWState& state, const AdamWConfig& cfg,
                const std::set<std::string>& no_decay = {});

}  // namespace lgdea
