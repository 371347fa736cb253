// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "lgdea/autodiff.hpp"
#include "lgdea/matrix.hpp"

namespace lgdea {

struct ModelConfig {
  int vocab = 520;
  int d = 32;    // shared evidence dimension
  int d_v = 32;  // visual dimension
  int d_pix = 16;
  int patches = 49;
  int prototypes = 64;      // K
  int lesion_queries = 64;  // L
  double tau_t = 0.1;
  double tau_p = 0.1;
  double tau_g = 0.1;
  double tau_1 = 0.07;
  double tau_2 = 0.07;
  double init_range = 0.05;

  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

struct ParamBlock {
  std::string name;
  Matrix value;
};

/// Canonical block order shared by binding, the optimizer and checkpoints.
std::vector<std::pair<std::string, std::pair<int, int>>> model_block_shapes(
    const ModelConfig& cfg);

/// Owns the trainable parameter matrices. All blocks initialize
/// uniform(-init_range, init_range) from the given seed.
class Model {
 public:
  Model() = default;
  Model(ModelConfig cfg, std::uint64_t seed);

  const ModelConfig& config() const { return cfg_; }
  std::vector<ParamBlock>& blocks() { return blocks_; }
  const std::vector<ParamBlock>& blocks() const { return blocks_; }
  Matrix& block(const std::string& name);
  const Matrix& block(const std::string& name) const;

 private:
  ModelConfig cfg_;
  std::vector<ParamBlock> blocks_;
};

/// One training step's differentiable view of the parameters.
struct BoundModel {
  ModelConfig cfg;
  Var token_embedding;      // vocab x d
  Var text_projection;      // d x d
  Var patch_projection;     // d_pix x d_v
  Var mix_query, mix_key, mix_value;  // d_v x d_v self-attention mixing block
  Var global_head;          // d_v x d
  Var lesion_queries;       // L x d_v
  Var lesion_key;           // d_v x d_v
  Var evidence_projection;  // d_v x d (phi)
  Var prototypes;           // K x d

  std::vector<Var> leaves() const;
};

BoundModel bind_model(const Model& model, bool requires_grad = true);
/// Rebind from externally supplied leaves (same canonical order); used by the
/// finite-difference harness so perturbed parameters flow through the exact
/// production forward code.
BoundModel bind_from_leaves(const ModelConfig& cfg, const std::vector<Var>& leaves);

struct TextEncoding {
  Var global;  // 1 x d, mean of local rows
  Var local;   // T x d
};
/// Throws InputError on an empty sequence or out-of-vocab id.
TextEncoding encode_text(const BoundModel& m, const std::vector<int>& tokens);

/// Global text embedding of an evidence phrase, L2-normalized.
Var encode_evidence(const BoundModel& m, const std::vector<int>& tokens);

struct ImageEncoding {
  Var global;  // 1 x d
  Var local;   // P x d_v, attention-mixed projected patches
};
ImageEncoding encode_image(const BoundModel& m, const Matrix& patches);

/// Attention rows of each lesion query over the patch embeddings; rows sum
/// to 1.
Var lesion_attention_weights(const BoundModel& m, const Var& image_local);

/// v_l: each row is an attention-weighted combination of patch embeddings.
Var lesion_attend(const BoundModel& m, const Var& image_local);

/// phi(v): linear map into the evidence space, rows L2-normalized
/// (zero rows stay zero, degenerate).
Var project_evidence(const BoundModel& m, const Var& lesions);

}  // namespace lgdea
