// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "lgdea/corpus.hpp"
#include "lgdea/encoders.hpp"
#include "lgdea/trainer.hpp"

namespace lgdea {

struct EvalConfig {
  int n_eval_samples = 200;
  std::vector<int> precision_ks = {1, 2, 5, 10};
};

struct EvalReport {
  std::map<int, double> precision_at_k;
  double zero_shot_accuracy = 0.0;
  std::map<int, double> cnr_per_concept;
  double mean_cnr = 0.0;
  int degenerate_maps = 0;
  std::string config_fingerprint;
  std::uint64_t seed = 0;

  bool operator==(const EvalReport&) const = default;
};

/// Mean over query images of (top-K retrieved reports whose concept set
/// intersects the query's) / K. Ranking is by cosine, ties broken by lower
/// index. Requires K <= number of reports.
double retrieval_precision(const Matrix& image_emb, const Matrix& report_emb,
                           const std::vector<std::set<int>>& image_classes,
                           const std::vector<std::set<int>>& report_classes, int k);

/// Argmax cosine against the class-prompt embeddings; ties resolved to the
/// lower class index.
int zero_shot_classify(const Matrix& image_row, const Matrix& class_prompts);

/// Per-patch activation: cosine between the phrase evidence embedding and
/// phi applied to each patch row of I^l, min-max normalized to [0, 1].
/// A constant map comes back flagged (degenerate = true).
struct GroundingMap {
  std::vector<double> activation;
  bool degenerate = false;
};
GroundingMap grounding_map(const Model& model, const ImageSample& image,
                           const std::vector<int>& phrase_tokens);

/// (mean_in - mean_out) / sqrt(var_in + var_out + eps), population variances.
/// The mask must be a nonempty proper subset of the patches.
double cnr(const std::vector<double>& activation, const std::vector<int>& mask_patches,
           double eps = 1e-8);

/// Mode-appropriate embeddings: evidence aggregates (H) for the full method,
/// normalized global heads for the baseline.
Matrix image_embedding(const Model& model, TrainMode mode, const ImageSample& image);
Matrix report_embedding(const Model& model, TrainMode mode, const ConceptWorld& world,
                        const Report& report);
/// One synthetic prompt per concept (tokens from that concept's vocabulary
/// only), embedded through the text path.
Matrix class_prompt_embeddings(const Model& model, TrainMode mode, const ConceptWorld& world);

/// Regenerates a fully paired held-out set from the corpus world (same
/// vocabulary and signatures, fresh samples from eval_seed) and runs the
/// retrieval / zero-shot / grounding protocols.
EvalReport evaluate(const Model& model, TrainMode mode, const Corpus& corpus,
                    std::uint64_t eval_seed, const EvalConfig& eval_cfg,
                    const std::string& fingerprint);

std::string eval_report_to_json_line(const EvalReport& report);
EvalReport eval_report_from_json_line(const std::string& line);
std::string eval_report_summary(const EvalReport& report);

}  // namespace lgdea
