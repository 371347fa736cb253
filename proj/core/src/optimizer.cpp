// SPDX-License-Identifier: Apache-2.0
#include "lgdea/optimizer.hpp"

#include <cmath>

#include "lgdea/errors.hpp"

namespace lgdea {

void AdamWState::init_like(const std::vector<ParamBlock>& blocks) {
  m.clear();
  v.clear();
  for (const auto& b : blocks) {
    m.emplace_back(b.value.rows(), b.value.cols());
    v.emplace_back(b.value.rows(), b.value.cols());
  }
  t = 0;
}

void adamw_step(std::vector<ParamBlock>& blocks, const std::vector<Matrix>& grads,
                AdamWState& state, const AdamWConfig& cfg,
                const std::set<std::string>& no_decay) {
  if (grads.size() != blocks.size() || state.m.size() != blocks.size() ||
      state.v.size() != blocks.size())
    throw DimensionError("adamw_step: block/gradient/moment counts disagree");
  state.t += 1;
  const double bc1 = 1.0 - std::pow(AdamWConfig::beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(AdamWConfig::beta2, static_cast<double>(state.t));
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    Matrix& p = blocks[b].value;
    const Matrix& g = grads[b];
    if (!p.same_shape(g)) throw DimensionError("adamw_step: gradient shape mismatch");
    Matrix& m = state.m[b];
    Matrix& v = state.v[b];
    const bool decay = cfg.weight_decay > 0.0 && !no_decay.contains(blocks[b].name);
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = AdamWConfig::beta1 * m[i] + (1.0 - AdamWConfig::beta1) * g[i];
      v[i] = AdamWConfig::beta2 * v[i] + (1.0 - AdamWConfig::beta2) * g[i] * g[i];
      const double m_hat = m[i] / bc1;
      const double v_hat = v[i] / bc2;
      p[i] -= cfg.lr * m_hat / (std::sqrt(v_hat) + AdamWConfig::eps);
      if (decay) p[i] -= cfg.lr * cfg.weight_decay * p[i];
    }
  }
}

}  // namespace lgdea
