// SPDX-License-Identifier: Apache-2.0
#include "lgdea/eval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "json.hpp"
#include "lgdea/errors.hpp"
#include "lgdea/evidence.hpp"
#include "lgdea/util.hpp"

namespace lgdea {

using nlohmann::json;

double retrieval_precision(const Matrix& image_emb, const Matrix& report_emb,
                           const std::vector<std::set<int>>& image_classes,
                           const std::vector<std::set<int>>& report_classes, int k) {
  const std::size_t n = image_emb.rows();
  const std::size_t m = report_emb.rows();
  if (k < 1 || static_cast<std::size_t>(k) > m)
    throw InputError("retrieval_precision: K must satisfy 1 <= K <= #reports");
  if (image_classes.size() != n || report_classes.size() != m)
    throw DimensionError("retrieval_precision: class list sizes disagree with embeddings");

  Matrix sim = cosine_rows(image_emb, report_emb);
  double total = 0.0;
  std::vector<int> order(m);
  for (std::size_t i = 0; i < n; ++i) {
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
      if (sim.at(i, a) != sim.at(i, b)) return sim.at(i, a) > sim.at(i, b);
      return a < b;
    });
    int hits = 0;
    for (int r = 0; r < k; ++r) {
      const std::set<int>& retrieved = report_classes[static_cast<std::size_t>(order[r])];
      const std::set<int>& query = image_classes[i];
      const bool hit = std::any_of(retrieved.begin(), retrieved.end(),
                                   [&](int c) { return query.contains(c); });
      hits += hit ? 1 : 0;
    }
    total += static_cast<double>(hits) / static_cast<double>(k);
  }
  return total / static_cast<double>(n);
}

int zero_shot_classify(const Matrix& image_row, const Matrix& class_prompts) {
  if (image_row.rows() != 1) throw DimensionError("zero_shot_classify: expected one row");
  if (class_prompts.rows() < 2)
    throw InputError("zero_shot_classify: need at least two class prompts");
  Matrix sim = cosine_rows(image_row, class_prompts);
  int best = 0;
  for (std::size_t c = 1; c < class_prompts.rows(); ++c)
    if (sim.at(0, c) > sim.at(0, best)) best = static_cast<int>(c);
  return best;
}

double cnr(const std::vector<double>& activation, const std::vector<int>& mask_patches,
           double eps) {
  if (mask_patches.empty()) throw InputError("cnr: empty mask");
  if (mask_patches.size() >= activation.size())
    throw InputError("cnr: mask must be a proper subset of the patches");
  std::vector<bool> inside(activation.size(), false);
  for (int p : mask_patches) {
    if (p < 0 || static_cast<std::size_t>(p) >= activation.size())
      throw InputError("cnr: mask index out of range");
    inside[static_cast<std::size_t>(p)] = true;
  }
  double sum_in = 0.0, sum_out = 0.0;
  std::size_t n_in = 0, n_out = 0;
  for (std::size_t i = 0; i < activation.size(); ++i) {
    if (inside[i]) {
      sum_in += activation[i];
      ++n_in;
    } else {
      sum_out += activation[i];
      ++n_out;
    }
  }
  const double mean_in = sum_in / static_cast<double>(n_in);
  const double mean_out = sum_out / static_cast<double>(n_out);
  double var_in = 0.0, var_out = 0.0;
  for (std::size_t i = 0; i < activation.size(); ++i) {
    if (inside[i])
      var_in += (activation[i] - mean_in) * (activation[i] - mean_in);
    else
      var_out += (activation[i] - mean_out) * (activation[i] - mean_out);
  }
  var_in /= static_cast<double>(n_in);
  var_out /= static_cast<double>(n_out);
  return (mean_in - mean_out) / std::sqrt(var_in + var_out + eps);
}

GroundingMap grounding_map(const Model& model, const ImageSample& image,
                           const std::vector<int>& phrase_tokens) {
  BoundModel m = bind_model(model, false);
  Matrix z = encode_evidence(m, phrase_tokens).value();  // 1 x d, unit
  Matrix local = encode_image(m, image.patches).local.value();  // P x d_v
  Matrix projected =
      l2_normalize_rows(matmul(local, model.block("evidence_projection")));  // P x d
  Matrix sims = cosine_rows(projected, z);  // P x 1

  GroundingMap map;
  map.activation.resize(sims.rows());
  double lo = sims.at(0, 0), hi = sims.at(0, 0);
  for (std::size_t p = 0; p < sims.rows(); ++p) {
    map.activation[p] = sims.at(p, 0);
    lo = std::min(lo, map.activation[p]);
    hi = std::max(hi, map.activation[p]);
  }
  if (hi - lo < 1e-12) {
    map.degenerate = true;
    std::fill(map.activation.begin(), map.activation.end(), 0.0);
    return map;
  }
  for (double& v : map.activation) v = (v - lo) / (hi - lo);
  return map;
}

Matrix image_embedding(const Model& model, TrainMode mode, const ImageSample& image) {
  BoundModel m = bind_model(model, false);
  ImageEncoding enc = encode_image(m, image.patches);
  if (mode == TrainMode::GlobalBaseline) return l2_normalize_rows(enc.global.value());
  Var v = lesion_attend(m, enc.local);
  return aggregate_image(project_evidence(m, v)).value();
}

Matrix report_embedding(const Model& model, TrainMode mode, const ConceptWorld& world,
                        const Report& report) {
  BoundModel m = bind_model(model, false);
  if (mode == TrainMode::GlobalBaseline)
    return l2_normalize_rows(encode_text(m, report.all_tokens()).global.value());
  std::vector<EvidencePhrase> phrases = extract_ground_truth(report, world);
  if (phrases.empty())
    return l2_normalize_rows(encode_text(m, report.all_tokens()).global.value());
  std::vector<Var> zs;
  zs.reserve(phrases.size());
  for (const auto& ph : phrases) zs.push_back(encode_evidence(m, ph.tokens));
  return aggregate_report(concat_rows(zs)).value();
}

Matrix class_prompt_embeddings(const Model& model, TrainMode mode, const ConceptWorld& world) {
  BoundModel m = bind_model(model, false);
  Matrix prompts(static_cast<std::size_t>(world.n_concepts),
                 static_cast<std::size_t>(model.config().d));
  for (int c = 0; c < world.n_concepts; ++c) {
    const int first = world.first_concept_token(c);
    std::vector<int> tokens = {first, first + 1, first + 2};
    for (int& t : tokens) t = std::min(t, first + world.tokens_per_concept - 1);
    Matrix z = mode == TrainMode::GlobalBaseline
                   ? l2_normalize_rows(encode_text(m, tokens).global.value())
                   : encode_evidence(m, tokens).value();
    for (std::size_t j = 0; j < z.cols(); ++j) prompts.at(static_cast<std::size_t>(c), j) = z.at(0, j);
  }
  return prompts;
}

EvalReport evaluate(const Model& model, TrainMode mode, const Corpus& corpus,
                    std::uint64_t eval_seed, const EvalConfig& eval_cfg,
                    const std::string& fingerprint) {
  if (eval_cfg.n_eval_samples < 2) throw ConfigError("evaluate: need at least two eval samples");
  std::mt19937_64 rng(splitmix64(eval_seed ^ 0x6576616cULL));

  // Held-out paired samples from the same world.
  std::vector<ImageSample> images;
  std::vector<Report> reports;
  images.reserve(eval_cfg.n_eval_samples);
  reports.reserve(eval_cfg.n_eval_samples);
  for (int i = 0; i < eval_cfg.n_eval_samples; ++i) {
    std::set<int> concepts = sample_concepts(corpus.config, rng);
    images.push_back(make_image(corpus.world, corpus.config, concepts, rng, 1000000 + i));
    reports.push_back(make_report(corpus.world, corpus.config, concepts, rng, 1000000 + i));
  }

  const int d = model.config().d;
  Matrix image_embs(images.size(), static_cast<std::size_t>(d));
  Matrix report_embs(reports.size(), static_cast<std::size_t>(d));
  std::vector<std::set<int>> image_classes, report_classes;
  for (std::size_t i = 0; i < images.size(); ++i) {
    Matrix e = image_embedding(model, mode, images[i]);
    for (std::size_t j = 0; j < e.cols(); ++j) image_embs.at(i, j) = e.at(0, j);
    image_classes.push_back(images[i].true_concepts);
  }
  for (std::size_t i = 0; i < reports.size(); ++i) {
    Matrix e = report_embedding(model, mode, corpus.world, reports[i]);
    for (std::size_t j = 0; j < e.cols(); ++j) report_embs.at(i, j) = e.at(0, j);
    report_classes.push_back(reports[i].true_concepts);
  }

  EvalReport report;
  report.seed = eval_seed;
  report.config_fingerprint = fingerprint;
  for (int k : eval_cfg.precision_ks)
    report.precision_at_k[k] =
        retrieval_precision(image_embs, report_embs, image_classes, report_classes, k);

  // Zero-shot classification against one prompt per concept; a prediction
  // counts when it names any of the sample's true concepts.
  Matrix prompts = class_prompt_embeddings(model, mode, corpus.world);
  int correct = 0;
  for (std::size_t i = 0; i < images.size(); ++i) {
    Matrix row(1, static_cast<std::size_t>(d));
    for (std::size_t j = 0; j < row.cols(); ++j) row.at(0, j) = image_embs.at(i, j);
    const int predicted = zero_shot_classify(row, prompts);
    correct += images[i].true_concepts.contains(predicted) ? 1 : 0;
  }
  report.zero_shot_accuracy = static_cast<double>(correct) / static_cast<double>(images.size());

  // Grounding: per concept, CNR of the phrase-similarity map against the
  // ground-truth lesion patches.
  std::map<int, std::vector<double>> cnr_values;
  for (std::size_t i = 0; i < images.size(); ++i) {
    std::vector<EvidencePhrase> phrases = extract_ground_truth(reports[i], corpus.world);
    for (const auto& ph : phrases) {
      int concept_id = -1;
      for (int tok : ph.tokens) {
        concept_id = corpus.world.concept_of_token(tok);
        if (concept_id >= 0) break;
      }
      if (concept_id < 0) continue;
      auto mask_it = images[i].lesion_mask.find(concept_id);
      if (mask_it == images[i].lesion_mask.end() || mask_it->second.empty()) continue;
      GroundingMap map = grounding_map(model, images[i], ph.tokens);
      if (map.degenerate) {
        report.degenerate_maps += 1;
        cnr_values[concept_id].push_back(0.0);
      } else {
        cnr_values[concept_id].push_back(cnr(map.activation, mask_it->second));
      }
    }
  }
  double cnr_sum = 0.0;
  int cnr_concepts = 0;
  for (const auto& [concept_id, values] : cnr_values) {
    const double mean =
        std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
    report.cnr_per_concept[concept_id] = mean;
    cnr_sum += mean;
    ++cnr_concepts;
  }
  report.mean_cnr = cnr_concepts > 0 ? cnr_sum / cnr_concepts : 0.0;
  return report;
}

std::string eval_report_to_json_line(const EvalReport& r) {
  json prec = json::object();
  for (const auto& [k, v] : r.precision_at_k) prec[std::to_string(k)] = v;
  json cnrs = json::object();
  for (const auto& [c, v] : r.cnr_per_concept) cnrs[std::to_string(c)] = v;
  json j{{"kind", "eval"},
         {"precision_at_k", prec},
         {"zero_shot_accuracy", r.zero_shot_accuracy},
         {"cnr_per_concept", cnrs},
         {"mean_cnr", r.mean_cnr},
         {"degenerate_maps", r.degenerate_maps},
         {"config_fingerprint", r.config_fingerprint},
         {"seed", r.seed}};
  return j.dump();
}

EvalReport eval_report_from_json_line(const std::string& line) {
  json j = json::parse(line, nullptr, false);
  if (j.is_discarded() || !j.contains("kind") || j.at("kind").get<std::string>() != "eval")
    throw FormatError("eval_report_from_json_line: not an eval record");
  EvalReport r;
  for (const auto& [k, v] : j.at("precision_at_k").items())
    r.precision_at_k[std::stoi(k)] = v.get<double>();
  r.zero_shot_accuracy = j.at("zero_shot_accuracy").get<double>();
  for (const auto& [c, v] : j.at("cnr_per_concept").items())
    r.cnr_per_concept[std::stoi(c)] = v.get<double>();
  r.mean_cnr = j.at("mean_cnr").get<double>();
  r.degenerate_maps = j.at("degenerate_maps").get<int>();
  r.config_fingerprint = j.at("config_fingerprint").get<std::string>();
  r.seed = j.at("seed").get<std::uint64_t>();
  return r;
}

std::string eval_report_summary(const EvalReport& r) {
  std::ostringstream out;
  out << "eval (seed " << r.seed << ", config " << r.config_fingerprint << ")\n";
  for (const auto& [k, v] : r.precision_at_k) out << "  precision@" << k << ": " << v << "\n";
  out << "  zero-shot accuracy: " << r.zero_shot_accuracy << "\n";
  out << "  mean CNR: " << r.mean_cnr << "\n";
  for (const auto& [c, v] : r.cnr_per_concept) out << "  cnr[concept " << c << "]: " << v << "\n";
  if (r.degenerate_maps > 0) out << "  degenerate maps: " << r.degenerate_maps << "\n";
  return out.str();
}

}  // namespace lgdea
