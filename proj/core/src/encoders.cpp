// SPDX-License-Identifier: Apache-2.0
#include "lgdea/encoders.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "lgdea/errors.hpp"

namespace lgdea {

void ModelConfig::validate() const {
  if (vocab < 1 || d < 1 || d_v < 1 || d_pix < 1 || patches < 1)
    throw ConfigError("ModelConfig: dimensions must be >= 1");
  if (prototypes < 2) throw ConfigError("ModelConfig: prototypes must be >= 2");
  if (lesion_queries < 1) throw ConfigError("ModelConfig: lesion_queries must be >= 1");
  for (double tau : {tau_t, tau_p, tau_g, tau_1, tau_2})
    if (!(tau > 0.0)) throw ConfigError("ModelConfig: temperatures must be positive");
  if (!(init_range > 0.0)) throw ConfigError("ModelConfig: init_range must be positive");
}

std::vector<std::pair<std::string, std::pair<int, int>>> model_block_shapes(
    const ModelConfig& cfg) {
  return {
      {"token_embedding", {cfg.vocab, cfg.d}},
      {"text_projection", {cfg.d, cfg.d}},
      {"patch_projection", {cfg.d_pix, cfg.d_v}},
      {"mix_query", {cfg.d_v, cfg.d_v}},
      {"mix_key", {cfg.d_v, cfg.d_v}},
      {"mix_value", {cfg.d_v, cfg.d_v}},
      {"global_head", {cfg.d_v, cfg.d}},
      {"lesion_queries", {cfg.lesion_queries, cfg.d_v}},
      {"lesion_key", {cfg.d_v, cfg.d_v}},
      {"evidence_projection", {cfg.d_v, cfg.d}},
      {"prototypes", {cfg.prototypes, cfg.d}},
  };
}

Model::Model(ModelConfig cfg, std::uint64_t seed) : cfg_(std::move(cfg)) {
  cfg_.validate();
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(-cfg_.init_range, cfg_.init_range);
  for (const auto& [name, shape] : model_block_shapes(cfg_)) {
    Matrix m(static_cast<std::size_t>(shape.first), static_cast<std::size_t>(shape.second));
    for (std::size_t i = 0; i < m.size(); ++i) m[i] = dist(rng);
    blocks_.push_back({name, std::move(m)});
  }
}

Matrix& Model::block(const std::string& name) {
  for (auto& b : blocks_)
    if (b.name == name) return b.value;
  throw InputError("Model: unknown block '" + name + "'");
}

const Matrix& Model::block(const std::string& name) const {
  for (const auto& b : blocks_)
    if (b.name == name) return b.value;
  throw InputError("Model: unknown block '" + name + "'");
}

std::vector<Var> BoundModel::leaves() const {
  return {token_embedding, text_projection, patch_projection, mix_query,       mix_key,
          mix_value,       global_head,     lesion_queries,   lesion_key,      evidence_projection,
          prototypes};
}

BoundModel bind_from_leaves(const ModelConfig& cfg, const std::vector<Var>& leaves) {
  if (leaves.size() != 11) throw InputError("bind_from_leaves: expected 11 parameter leaves");
  BoundModel m;
  m.cfg = cfg;
  m.token_embedding = leaves[0];
  m.text_projection = leaves[1];
  m.patch_projection = leaves[2];
  m.mix_query = leaves[3];
  m.mix_key = leaves[4];
  m.mix_value = leaves[5];
  m.global_head = leaves[6];
  m.lesion_queries = leaves[7];
  m.lesion_key = leaves[8];
  m.evidence_projection = leaves[9];
  m.prototypes = leaves[10];
  return m;
}

BoundModel bind_model(const Model& model, bool requires_grad) {
  std::vector<Var> leaves;
  leaves.reserve(model.blocks().size());
  for (const auto& b : model.blocks()) leaves.push_back(Var::leaf(b.value, requires_grad));
  return bind_from_leaves(model.config(), leaves);
}

TextEncoding encode_text(const BoundModel& m, const std::vector<int>& tokens) {
  if (tokens.empty()) throw InputError("encode_text: empty token sequence");
  for (int t : tokens)
    if (t < 0 || t >= m.cfg.vocab)
      throw InputError("encode_text: token id " + std::to_string(t) + " outside vocab");
  Var local = matmul(gather_rows(m.token_embedding, tokens), m.text_projection);
  // The global row pools in sorted-token order so it is exactly invariant
  // under permutation of the input sequence.
  std::vector<int> sorted_tokens = tokens;
  std::sort(sorted_tokens.begin(), sorted_tokens.end());
  Var global =
      matmul(mean_rows(gather_rows(m.token_embedding, sorted_tokens)), m.text_projection);
  return {global, local};
}

Var encode_evidence(const BoundModel& m, const std::vector<int>& tokens) {
  return l2_normalize_rows(encode_text(m, tokens).global);
}

ImageEncoding encode_image(const BoundModel& m, const Matrix& patches) {
  if (static_cast<int>(patches.rows()) != m.cfg.patches ||
      static_cast<int>(patches.cols()) != m.cfg.d_pix)
    throw InputError("encode_image: expected " + std::to_string(m.cfg.patches) + "x" +
                     std::to_string(m.cfg.d_pix) + " patch grid");
  Var x = matmul(Var::constant(patches), m.patch_projection);  // P x d_v
  const double tau_a = std::sqrt(static_cast<double>(m.cfg.d_v));
  Var mixed = add(x, attention(matmul(x, m.mix_query), matmul(x, m.mix_key),
                               matmul(x, m.mix_value), tau_a));
  Var global = matmul(mean_rows(mixed), m.global_head);
  return {global, mixed};
}

Var lesion_attention_weights(const BoundModel& m, const Var& image_local) {
  const double tau_a = std::sqrt(static_cast<double>(m.cfg.d_v));
  Var keys = matmul(image_local, m.lesion_key);
  return row_softmax(matmul(m.lesion_queries, transpose(keys)), tau_a);
}

Var lesion_attend(const BoundModel& m, const Var& image_local) {
  // Values are the raw patch embeddings, so each v_l stays a convex
  // combination of I^l rows; only the keys carry a learned projection.
  return matmul(lesion_attention_weights(m, image_local), image_local);
}

Var project_evidence(const BoundModel& m, const Var& lesions) {
  if (lesions.cols() != static_cast<std::size_t>(m.cfg.d_v))
    throw DimensionError("project_evidence: expected d_v columns");
  return l2_normalize_rows(matmul(lesions, m.evidence_projection));
}

}  // namespace lgdea
