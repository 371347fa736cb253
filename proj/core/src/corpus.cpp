// SPDX-License-Identifier: Apache-2.0
#include "lgdea/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <string>

#include "json.hpp"
#include "lgdea/errors.hpp"

namespace lgdea {

using nlohmann::json;

void GenConfig::validate() const {
  if (!(pairing_ratio > 0.0) || pairing_ratio > 1.0)
    throw ConfigError("GenConfig: pairing_ratio must lie in (0, 1]");
  if (n_concepts < 2) throw ConfigError("GenConfig: n_concepts must be >= 2");
  if (n_images < 1) throw ConfigError("GenConfig: n_images must be >= 1");
  if (d_pix < 1 || patches < 1 || tokens_per_concept < 1 || background_tokens < 1)
    throw ConfigError("GenConfig: counts must be >= 1");
  const int side = static_cast<int>(std::lround(std::sqrt(static_cast<double>(patches))));
  if (side * side != patches) throw ConfigError("GenConfig: patches must be a square count");
  if (min_phrase_tokens < 2 || max_phrase_tokens < min_phrase_tokens)
    throw ConfigError("GenConfig: invalid phrase length range");
  if (min_concepts_per_sample < 1 || max_concepts_per_sample < min_concepts_per_sample ||
      max_concepts_per_sample > n_concepts)
    throw ConfigError("GenConfig: invalid concepts-per-sample range");
  if (max_lesion_patches < 1 ||
      max_lesion_patches * max_concepts_per_sample > patches)
    throw ConfigError("GenConfig: lesion patches cannot exceed the patch grid");
  if (!(noise_sigma > 0.0)) throw ConfigError("GenConfig: noise_sigma must be positive");
}

int ConceptWorld::concept_of_token(int token) const {
  if (token < background_tokens || token >= vocab_size()) return -1;
  return (token - background_tokens) / tokens_per_concept;
}

std::vector<int> Report::all_tokens() const {
  std::vector<int> out;
  for (const auto& s : sentences) out.insert(out.end(), s.begin(), s.end());
  return out;
}

ConceptWorld make_world(const GenConfig& cfg, std::mt19937_64& rng) {
  ConceptWorld world;
  world.n_concepts = cfg.n_concepts;
  world.d_pix = cfg.d_pix;
  world.tokens_per_concept = cfg.tokens_per_concept;
  world.background_tokens = cfg.background_tokens;
  world.noise_sigma = cfg.noise_sigma;
  world.lesion_amplitude = cfg.lesion_amplitude;
  world.lesion_signatures = Matrix(cfg.n_concepts, cfg.d_pix);

  std::normal_distribution<double> gauss(0.0, 1.0);
  for (int c = 0; c < cfg.n_concepts; ++c) {
    for (int attempt = 0; attempt < 10000; ++attempt) {
      Matrix candidate(1, cfg.d_pix);
      for (int j = 0; j < cfg.d_pix; ++j) candidate.at(0, j) = gauss(rng);
      candidate = l2_normalize_rows(candidate);
      bool ok = true;
      for (int prev = 0; prev < c && ok; ++prev) {
        double dot = 0.0;
        for (int j = 0; j < cfg.d_pix; ++j)
          dot += candidate.at(0, j) * world.lesion_signatures.at(prev, j);
        ok = std::abs(dot) < 0.5;
      }
      if (ok) {
        for (int j = 0; j < cfg.d_pix; ++j)
          world.lesion_signatures.at(c, j) = candidate.at(0, j);
        break;
      }
      if (attempt == 9999)
        throw ConfigError("make_world: could not place pairwise-separated lesion signatures");
    }
  }
  return world;
}

std::set<int> sample_concepts(const GenConfig& cfg, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> count_dist(cfg.min_concepts_per_sample,
                                                cfg.max_concepts_per_sample);
  const int want = count_dist(rng);
  std::set<int> out;
  std::uniform_int_distribution<int> pick(0, cfg.n_concepts - 1);
  while (static_cast<int>(out.size()) < want) out.insert(pick(rng));
  return out;
}

ImageSample make_image(const ConceptWorld& world, const GenConfig& cfg,
                       const std::set<int>& concepts, std::mt19937_64& rng, std::int64_t id,
                       bool shifted_background) {
  ImageSample img;
  img.id = id;
  img.true_concepts = concepts;
  img.patches = Matrix(cfg.patches, cfg.d_pix);

  const double shift = shifted_background ? cfg.cross_domain_shift : 0.0;
  std::normal_distribution<double> noise(0.0, world.noise_sigma);
  for (std::size_t i = 0; i < img.patches.size(); ++i) img.patches[i] = noise(rng) + shift;

  std::vector<int> available(cfg.patches);
  for (int i = 0; i < cfg.patches; ++i) available[i] = i;

  for (int c : concepts) {  // std::set iterates sorted: deterministic
    std::uniform_int_distribution<int> count_dist(1, cfg.max_lesion_patches);
    const int want = count_dist(rng);
    std::vector<int> chosen;
    for (int n = 0; n < want; ++n) {
      std::uniform_int_distribution<std::size_t> slot(0, available.size() - 1);
      const std::size_t s = slot(rng);
      chosen.push_back(available[s]);
      available.erase(available.begin() + static_cast<std::ptrdiff_t>(s));
    }
    std::sort(chosen.begin(), chosen.end());
    for (int p : chosen)
      for (int j = 0; j < cfg.d_pix; ++j)
        img.patches.at(p, j) += world.lesion_amplitude * world.lesion_signatures.at(c, j);
    img.lesion_mask[c] = std::move(chosen);
  }
  return img;
}

Report make_report(const ConceptWorld& world, const GenConfig& cfg,
                   const std::set<int>& concepts, std::mt19937_64& rng, std::int64_t id) {
  Report rep;
  rep.id = id;
  rep.true_concepts = concepts;
  std::uniform_int_distribution<int> len_dist(cfg.min_phrase_tokens, cfg.max_phrase_tokens);
  std::uniform_int_distribution<int> bg_dist(0, world.background_tokens - 1);
  for (int c : concepts) {
    const int len = len_dist(rng);
    std::uniform_int_distribution<int> n_con_dist(1, len - 1);
    const int n_con = n_con_dist(rng);
    std::uniform_int_distribution<int> con_dist(world.first_concept_token(c),
                                                world.first_concept_token(c) +
                                                    world.tokens_per_concept - 1);
    std::vector<int> sentence;
    sentence.reserve(len);
    for (int i = 0; i < n_con; ++i) sentence.push_back(con_dist(rng));
    for (int i = n_con; i < len; ++i) sentence.push_back(bg_dist(rng));
    std::shuffle(sentence.begin(), sentence.end(), rng);
    rep.sentences.push_back(std::move(sentence));
  }
  return rep;
}

Corpus generate_corpus(const GenConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  std::mt19937_64 rng(seed);

  Corpus corpus;
  corpus.config = cfg;
  corpus.pairing_ratio = cfg.pairing_ratio;
  corpus.seed = seed;
  corpus.world = make_world(cfg, rng);

  const int n_paired =
      std::max(1, static_cast<int>(std::llround(cfg.pairing_ratio * cfg.n_images)));
  for (int i = 0; i < cfg.n_images; ++i) {
    const bool is_paired = i < n_paired;
    const bool shifted = cfg.cross_domain && !is_paired;
    std::set<int> concepts = sample_concepts(cfg, rng);
    ImageSample img = make_image(corpus.world, cfg, concepts, rng, i, shifted);
    Report rep = make_report(corpus.world, cfg, concepts, rng, i);
    if (is_paired) {
      corpus.paired.emplace_back(std::move(img), std::move(rep));
    } else {
      corpus.unpaired_images.push_back(std::move(img));
      corpus.unpaired_reports.push_back(std::move(rep));
    }
  }
  return corpus;
}

// -- serialization -------------------------------------------------------------

namespace {
constexpr int kCorpusSchemaVersion = 1;

json matrix_to_json(const Matrix& m) {
  return json{{"rows", m.rows()},
              {"cols", m.cols()},
              {"data", std::vector<double>(m.data(), m.data() + m.size())}};
}

Matrix matrix_from_json(const json& j) {
  return Matrix(j.at("rows").get<std::size_t>(), j.at("cols").get<std::size_t>(),
                j.at("data").get<std::vector<double>>());
}

json image_to_json(const ImageSample& img) {
  json mask = json::array();
  for (const auto& [concept_id, patch_list] : img.lesion_mask)
    mask.push_back(json::array({concept_id, patch_list}));
  return json{{"id", img.id},
              {"concepts", std::vector<int>(img.true_concepts.begin(), img.true_concepts.end())},
              {"mask", mask},
              {"patches", matrix_to_json(img.patches)}};
}

ImageSample image_from_json(const json& j) {
  ImageSample img;
  img.id = j.at("id").get<std::int64_t>();
  for (int c : j.at("concepts").get<std::vector<int>>()) img.true_concepts.insert(c);
  for (const auto& entry : j.at("mask"))
    img.lesion_mask[entry.at(0).get<int>()] = entry.at(1).get<std::vector<int>>();
  img.patches = matrix_from_json(j.at("patches"));
  return img;
}

json report_to_json(const Report& rep) {
  return json{{"id", rep.id},
              {"concepts", std::vector<int>(rep.true_concepts.begin(), rep.true_concepts.end())},
              {"sentences", rep.sentences}};
}

Report report_from_json(const json& j) {
  Report rep;
  rep.id = j.at("id").get<std::int64_t>();
  for (int c : j.at("concepts").get<std::vector<int>>()) rep.true_concepts.insert(c);
  rep.sentences = j.at("sentences").get<std::vector<std::vector<int>>>();
  return rep;
}

json gen_config_to_json(const GenConfig& c) {
  return json{{"n_images", c.n_images},
              {"pairing_ratio", c.pairing_ratio},
              {"n_concepts", c.n_concepts},
              {"d_pix", c.d_pix},
              {"patches", c.patches},
              {"tokens_per_concept", c.tokens_per_concept},
              {"background_tokens", c.background_tokens},
              {"noise_sigma", c.noise_sigma},
              {"lesion_amplitude", c.lesion_amplitude},
              {"min_phrase_tokens", c.min_phrase_tokens},
              {"max_phrase_tokens", c.max_phrase_tokens},
              {"min_concepts_per_sample", c.min_concepts_per_sample},
              {"max_concepts_per_sample", c.max_concepts_per_sample},
              {"max_lesion_patches", c.max_lesion_patches},
              {"cross_domain", c.cross_domain},
              {"cross_domain_shift", c.cross_domain_shift}};
}

GenConfig gen_config_from_json(const json& j) {
  GenConfig c;
  c.n_images = j.at("n_images").get<int>();
  c.pairing_ratio = j.at("pairing_ratio").get<double>();
  c.n_concepts = j.at("n_concepts").get<int>();
  c.d_pix = j.at("d_pix").get<int>();
  c.patches = j.at("patches").get<int>();
  c.tokens_per_concept = j.at("tokens_per_concept").get<int>();
  c.background_tokens = j.at("background_tokens").get<int>();
  c.noise_sigma = j.at("noise_sigma").get<double>();
  c.lesion_amplitude = j.at("lesion_amplitude").get<double>();
  c.min_phrase_tokens = j.at("min_phrase_tokens").get<int>();
  c.max_phrase_tokens = j.at("max_phrase_tokens").get<int>();
  c.min_concepts_per_sample = j.at("min_concepts_per_sample").get<int>();
  c.max_concepts_per_sample = j.at("max_concepts_per_sample").get<int>();
  c.max_lesion_patches = j.at("max_lesion_patches").get<int>();
  c.cross_domain = j.at("cross_domain").get<bool>();
  c.cross_domain_shift = j.at("cross_domain_shift").get<double>();
  return c;
}

json world_to_json(const ConceptWorld& w) {
  return json{{"n_concepts", w.n_concepts},
              {"d_pix", w.d_pix},
              {"tokens_per_concept", w.tokens_per_concept},
              {"background_tokens", w.background_tokens},
              {"noise_sigma", w.noise_sigma},
              {"lesion_amplitude", w.lesion_amplitude},
              {"lesion_signatures", matrix_to_json(w.lesion_signatures)}};
}

ConceptWorld world_from_json(const json& j) {
  ConceptWorld w;
  w.n_concepts = j.at("n_concepts").get<int>();
  w.d_pix = j.at("d_pix").get<int>();
  w.tokens_per_concept = j.at("tokens_per_concept").get<int>();
  w.background_tokens = j.at("background_tokens").get<int>();
  w.noise_sigma = j.at("noise_sigma").get<double>();
  w.lesion_amplitude = j.at("lesion_amplitude").get<double>();
  w.lesion_signatures = matrix_from_json(j.at("lesion_signatures"));
  return w;
}

json parse_line(const std::string& line, const std::string& path) {
  json j = json::parse(line, nullptr, false);
  if (j.is_discarded()) throw FormatError("corpus file " + path + ": malformed record");
  return j;
}
}  // namespace

void save_corpus(const Corpus& corpus, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw FormatError("save_corpus: cannot open " + path + " for writing");
  json header{{"schema_version", kCorpusSchemaVersion},
              {"kind", "lgdea-corpus"},
              {"seed", corpus.seed},
              {"pairing_ratio", corpus.pairing_ratio},
              {"config", gen_config_to_json(corpus.config)},
              {"world", world_to_json(corpus.world)}};
  out << header.dump() << "\n";
  for (const auto& [img, rep] : corpus.paired) {
    out << json{{"type", "paired"}, {"image", image_to_json(img)}, {"report", report_to_json(rep)}}
               .dump()
        << "\n";
  }
  for (const auto& img : corpus.unpaired_images)
    out << json{{"type", "image"}, {"image", image_to_json(img)}}.dump() << "\n";
  for (const auto& rep : corpus.unpaired_reports)
    out << json{{"type", "report"}, {"report", report_to_json(rep)}}.dump() << "\n";
  out << json{{"type", "end"},
              {"paired", corpus.paired.size()},
              {"images", corpus.unpaired_images.size()},
              {"reports", corpus.unpaired_reports.size()}}
             .dump()
      << "\n";
  if (!out) throw FormatError("save_corpus: write failure on " + path);
}

Corpus load_corpus(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("load_corpus: cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw FormatError("load_corpus: empty file " + path);
  json header = parse_line(line, path);
  if (!header.contains("schema_version") || !header.contains("kind") ||
      header.at("kind").get<std::string>() != "lgdea-corpus")
    throw FormatError("load_corpus: " + path + " is not a corpus file");
  if (header.at("schema_version").get<int>() != kCorpusSchemaVersion)
    throw FormatError("load_corpus: unsupported schema version in " + path);

  Corpus corpus;
  corpus.seed = header.at("seed").get<std::uint64_t>();
  corpus.pairing_ratio = header.at("pairing_ratio").get<double>();
  corpus.config = gen_config_from_json(header.at("config"));
  corpus.world = world_from_json(header.at("world"));

  bool saw_end = false;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    json j = parse_line(line, path);
    const std::string type = j.at("type").get<std::string>();
    if (type == "paired") {
      corpus.paired.emplace_back(image_from_json(j.at("image")), report_from_json(j.at("report")));
    } else if (type == "image") {
      corpus.unpaired_images.push_back(image_from_json(j.at("image")));
    } else if (type == "report") {
      corpus.unpaired_reports.push_back(report_from_json(j.at("report")));
    } else if (type == "end") {
      if (j.at("paired").get<std::size_t>() != corpus.paired.size() ||
          j.at("images").get<std::size_t>() != corpus.unpaired_images.size() ||
          j.at("reports").get<std::size_t>() != corpus.unpaired_reports.size())
        throw FormatError("load_corpus: record counts disagree with trailer in " + path);
      saw_end = true;
      break;
    } else {
      throw FormatError("load_corpus: unknown record type '" + type + "' in " + path);
    }
  }
  if (!saw_end) throw FormatError("load_corpus: truncated file " + path);
  return corpus;
}

}  // namespace lgdea
