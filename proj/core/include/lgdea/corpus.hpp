// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <map>
#include <random>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "lgdea/matrix.hpp"

namespace lgdea {

/// Parameters for synthetic corpus generation.
struct GenConfig {
  int n_images = 1000;
  double pairing_ratio = 0.10;
  int n_concepts = 8;
  int d_pix = 16;
  int patches = 49;  // square grid
  int tokens_per_concept = 40;
  int background_tokens = 200;
  double noise_sigma = 0.3;
  double lesion_amplitude = 2.0;
  int min_phrase_tokens = 3;
  int max_phrase_tokens = 6;
  int min_concepts_per_sample = 1;
  int max_concepts_per_sample = 3;
  int max_lesion_patches = 4;
  // Cross-domain: unpaired images drawn from a world sharing lesion
  // signatures but with shifted background statistics.
  bool cross_domain = false;
  double cross_domain_shift = 0.5;

  void validate() const;  // throws ConfigError
  bool operator==(const GenConfig&) const = default;
};

/// Ground-truth latent structure of the synthetic world: disjoint per-concept
/// vocabularies plus a shared background vocabulary, and one pixel-space
/// signature per concept (pairwise cosine < 0.5, enforced by rejection).
struct ConceptWorld {
  int n_concepts = 8;
  int d_pix = 16;
  int tokens_per_concept = 40;
  int background_tokens = 200;
  double noise_sigma = 0.3;
  double lesion_amplitude = 2.0;
  Matrix lesion_signatures;  // n_concepts x d_pix, unit rows

  int vocab_size() const { return background_tokens + n_concepts * tokens_per_concept; }
  bool is_background(int token) const { return token >= 0 && token < background_tokens; }
  /// Concept owning this token, or -1 for background.
  int concept_of_token(int token) const;
  int first_concept_token(int concept_id) const {
    return background_tokens + concept_id * tokens_per_concept;
  }

  bool operator==(const ConceptWorld&) const = default;
};

struct Report {
  std::vector<std::vector<int>> sentences;  // token-id sequences
  std::set<int> true_concepts;
  std::int64_t id = -1;

  std::vector<int> all_tokens() const;
  bool operator==(const Report&) const = default;
};

struct ImageSample {
  Matrix patches;  // P x d_pix
  std::map<int, std::vector<int>> lesion_mask;  // concept -> sorted patch indices
  std::set<int> true_concepts;
  std::int64_t id = -1;

  bool operator==(const ImageSample&) const = default;
};

struct Corpus {
  std::vector<std::pair<ImageSample, Report>> paired;
  std::vector<ImageSample> unpaired_images;
  std::vector<Report> unpaired_reports;
  ConceptWorld world;
  double pairing_ratio = 1.0;
  std::uint64_t seed = 0;
  GenConfig config;

  std::size_t total_samples() const {
    return paired.size() + unpaired_images.size() + unpaired_reports.size();
  }
  bool operator==(const Corpus&) const = default;
};

ConceptWorld make_world(const GenConfig& cfg, std::mt19937_64& rng);
std::set<int> sample_concepts(const GenConfig& cfg, std::mt19937_64& rng);
ImageSample make_image(const ConceptWorld& world, const GenConfig& cfg,
                       const std::set<int>& concepts, std::mt19937_64& rng, std::int64_t id,
                       bool shifted_background = false);
Report make_report(const ConceptWorld& world, const GenConfig& cfg,
                   const std::set<int>& concepts, std::mt19937_64& rng, std::int64_t id);

/// Deterministic for a fixed seed: equal seeds give bit-identical corpora.
Corpus generate_corpus(const GenConfig& cfg, std::uint64_t seed);

/// Line-delimited record format with a schema_version header and an explicit
/// trailing record carrying counts, so truncation is detected on load.
void save_corpus(const Corpus& corpus, const std::string& path);
Corpus load_corpus(const std::string& path);

}  // namespace lgdea
