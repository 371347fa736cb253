// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

#include "lgdea/corpus.hpp"
#include "lgdea/encoders.hpp"
#include "lgdea/evidence.hpp"
#include "lgdea/evidence_space.hpp"
#include "lgdea/gradcheck.hpp"
#include "lgdea/optimizer.hpp"
#include "lgdea/relation.hpp"

namespace lgdea {

enum class TrainMode { Lgdea, GlobalBaseline };

struct Phase {
  int epochs = 1;
  double learning_rate = 1e-3;
  int batch_size = 32;
};

struct TrainConfig {
  int batch_size = 32;
  double paired_fraction = 0.25;  // per-batch fraction of paired samples
  double learning_rate = 1e-3;
  double weight_decay = 1e-6;
  int epochs = 10;
  std::uint64_t seed = 0;
  // Loss weights for L_rec, the paired evidence distillation, the unpaired
  // kNN consistency, and the evidence alignment.
  double w_rec = 1.0;
  double w_paired = 1.0;
  double w_unpaired = 1.0;
  double w_align = 1.0;
  int knn_k = 5;
  int propagation_steps = 2;
  double lambda_reg = 1e-2;  // prototype regularizer weight; 1.0 = literal form
  bool renormalize_prototypes = false;
  TrainMode mode = TrainMode::Lgdea;
  ExtractorBackend extractor = ExtractorBackend::GroundTruth;
  std::vector<Phase> phases;  // empty: single phase from the fields above
  ModelConfig model;

  std::vector<Phase> effective_phases() const;
  void validate() const;
};

/// One mini-batch: paired samples occupy the matching prefix on both sides,
/// so the seed relation matrix is block-identity over [0, n_paired).
struct Batch {
  std::vector<const ImageSample*> images;
  std::vector<const Report*> reports;
  int n_paired = 0;
};

std::vector<Batch> make_batches(const Corpus& corpus, const TrainConfig& cfg,
                                std::uint64_t epoch_seed);

/// Batch with evidence already extracted (one phrase list per report).
struct BatchData {
  std::vector<const ImageSample*> images;
  std::vector<const Report*> reports;
  std::vector<std::vector<EvidencePhrase>> phrases;
  int n_paired = 0;
};

/// Detached quantities of one step. In production they are computed from the
/// live parameter values; the finite-difference harness pins them so the
/// severed branches stay constant under perturbation.
struct FrozenParts {
  std::vector<Matrix> teachers;  // per paired sample; 0x0 marks skipped
  KnnResult knn;
  Matrix knn_targets;
  Matrix p;
};

struct LossBundle {
  Var rec, paired, unpaired, align, global_nce, total;
  int p_zero_rows = 0;
  int empty_evidence = 0;
  double p_diag_mass = 0.0;
  FrozenParts frozen_used;
  Matrix y, s_img, s_txt, p;
};

/// Runs the four-stage step (evidence space, lesion evidence, relation
/// inference, alignment) and assembles per-term plus weighted total losses.
LossBundle compute_losses(const BoundModel& model, const BatchData& data, const TrainConfig& cfg,
                          const FrozenParts* frozen = nullptr);

enum class LossTerm { Rec, Paired, Unpaired, Align, Global, Total };

/// Loss closure over the canonical parameter-leaf order for check_gradients.
/// Detached structures are pinned from `reference` at construction.
LossFn make_loss_fn(const BatchData& data, const TrainConfig& cfg, const Model& reference,
                    LossTerm term);

struct StepRecord {
  std::int64_t step = 0;
  double loss_rec = 0.0;
  double loss_paired = 0.0;
  double loss_unpaired = 0.0;
  double loss_align = 0.0;
  double loss_global = 0.0;
  double total = 0.0;
  int p_zero_rows = 0;
  int empty_evidence = 0;
  double p_diag_mass = 0.0;
};

struct TrainState {
  Model model;
  AdamWState opt;
  std::int64_t step = 0;
  std::mt19937_64 rng;
  TrainConfig config;
};

TrainState init_train_state(const TrainConfig& cfg);

class Trainer {
 public:
  Trainer(const Corpus& corpus, const TrainConfig& cfg);
  Trainer(const Corpus& corpus, TrainState state);

  TrainState& state() { return state_; }
  const TrainState& state() const { return state_; }

  BatchData prepare(const Batch& batch) const;
  /// One optimizer step; throws NumericError with a diagnostic dump if any
  /// loss term is non-finite.
  StepRecord train_step(const Batch& batch);

  /// Full phase/epoch loop from the current step counter. Appends one
  /// line-delimited record per step to `metrics` when given; with
  /// dump_relations also emits Y/S/P per step.
  void train(std::ostream* metrics = nullptr, bool dump_relations = false);

  /// Steps per epoch under the given batch geometry.
  int steps_per_epoch(int batch_size) const;

 private:
  const Corpus* corpus_;
  TrainState state_;
  std::unordered_map<std::int64_t, std::vector<EvidencePhrase>> evidence_cache_;
  Matrix last_bundle_y_, last_bundle_s_img_, last_bundle_s_txt_, last_bundle_p_;
  void build_evidence_cache();
  const std::vector<EvidencePhrase>& phrases_for(const Report& report) const;
  StepRecord train_step_with_lr(const Batch& batch, double lr_override);
};

void write_step_record(std::ostream& out, const StepRecord& record);
void write_relation_dump(std::ostream& out, std::int64_t step, const Matrix& y,
                         const Matrix& s_img, const Matrix& s_txt, const Matrix& p);

/// Schema-versioned checkpoint: named blocks with shapes and flat decimal
/// arrays plus optimizer moments, step counter and RNG state. Round-trips
/// bit-exact.
void save_checkpoint(const TrainState& state, const std::string& path);
TrainState load_checkpoint(const std::string& path);

std::string train_config_to_json_string(const TrainConfig& cfg);
TrainConfig train_config_from_json_string(const std::string& text);
TrainConfig load_train_config(const std::string& path);
void save_train_config(const TrainConfig& cfg, const std::string& path);

/// Stable hash of the canonical config serialization.
std::string config_fingerprint(const TrainConfig& cfg);

const char* train_mode_name(TrainMode mode);
TrainMode train_mode_from_name(const std::string& name);

}  // namespace lgdea
