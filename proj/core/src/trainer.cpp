// SPDX-License-Identifier: Apache-2.0
#include "lgdea/trainer.hpp"

#include <algorithm>
#include <cstdio>
#include <cmath>
#include <fstream>
#include <limits>
#include <ostream>
#include <sstream>

#include "json.hpp"
#include "lgdea/errors.hpp"
#include "lgdea/util.hpp"

namespace lgdea {

using nlohmann::json;

namespace {
constexpr int kCheckpointSchemaVersion = 1;
constexpr int kConfigSchemaVersion = 1;

Var zero_scalar() { return Var::constant(Matrix(1, 1)); }

struct BatchGeometry {
  int n_paired = 0;
  int n_unpaired_images = 0;
  int n_unpaired_reports = 0;
};

BatchGeometry batch_geometry(const TrainConfig& cfg, int batch_size) {
  BatchGeometry g;
  if (cfg.mode == TrainMode::GlobalBaseline) {
    g.n_paired = batch_size;
    return g;
  }
  g.n_paired = static_cast<int>(std::llround(cfg.paired_fraction * batch_size));
  g.n_paired = std::min(g.n_paired, batch_size);
  if (g.n_paired < 1)
    throw ConfigError("make_batches: paired_fraction yields zero paired samples per batch");
  const int rest = batch_size - g.n_paired;
  g.n_unpaired_images = (rest + 1) / 2;
  g.n_unpaired_reports = rest / 2;
  return g;
}
}  // namespace

std::vector<Phase> TrainConfig::effective_phases() const {
  if (!phases.empty()) return phases;
  return {Phase{epochs, learning_rate, batch_size}};
}

void TrainConfig::validate() const {
  if (batch_size < 1) throw ConfigError("TrainConfig: batch_size must be >= 1");
  if (!(paired_fraction > 0.0) || paired_fraction > 1.0)
    throw ConfigError("TrainConfig: paired_fraction must lie in (0, 1]");
  if (!(learning_rate > 0.0)) throw ConfigError("TrainConfig: learning_rate must be positive");
  if (weight_decay < 0.0) throw ConfigError("TrainConfig: weight_decay must be >= 0");
  if (epochs < 1 && phases.empty()) throw ConfigError("TrainConfig: epochs must be >= 1");
  if (knn_k < 1) throw ConfigError("TrainConfig: knn_k must be >= 1");
  if (propagation_steps < 0) throw ConfigError("TrainConfig: propagation_steps must be >= 0");
  if (lambda_reg < 0.0) throw ConfigError("TrainConfig: lambda_reg must be >= 0");
  for (const Phase& p : phases)
    if (p.epochs < 1 || !(p.learning_rate > 0.0) || p.batch_size < 1)
      throw ConfigError("TrainConfig: invalid phase entry");
  model.validate();
}

std::vector<Batch> make_batches(const Corpus& corpus, const TrainConfig& cfg,
                                std::uint64_t epoch_seed) {
  const int b = cfg.batch_size;
  if (corpus.total_samples() < static_cast<std::size_t>(b))
    throw ConfigError("make_batches: corpus smaller than one batch");
  const BatchGeometry geo = batch_geometry(cfg, b);

  std::vector<std::size_t> paired_idx(corpus.paired.size());
  std::vector<std::size_t> ui_idx(corpus.unpaired_images.size());
  std::vector<std::size_t> ur_idx(corpus.unpaired_reports.size());
  for (std::size_t i = 0; i < paired_idx.size(); ++i) paired_idx[i] = i;
  for (std::size_t i = 0; i < ui_idx.size(); ++i) ui_idx[i] = i;
  for (std::size_t i = 0; i < ur_idx.size(); ++i) ur_idx[i] = i;
  std::mt19937_64 rng(epoch_seed);
  std::shuffle(paired_idx.begin(), paired_idx.end(), rng);
  std::shuffle(ui_idx.begin(), ui_idx.end(), rng);
  std::shuffle(ur_idx.begin(), ur_idx.end(), rng);

  std::size_t n_batches = geo.n_paired > 0 ? paired_idx.size() / geo.n_paired
                                           : std::numeric_limits<std::size_t>::max();
  if (geo.n_unpaired_images > 0)
    n_batches = std::min(n_batches, ui_idx.size() / geo.n_unpaired_images);
  if (geo.n_unpaired_reports > 0)
    n_batches = std::min(n_batches, ur_idx.size() / geo.n_unpaired_reports);
  if (n_batches == 0 || n_batches == std::numeric_limits<std::size_t>::max())
    throw ConfigError("make_batches: insufficient data for one batch at this geometry");

  std::vector<Batch> batches;
  batches.reserve(n_batches);
  std::size_t pi = 0, ii = 0, ri = 0;
  for (std::size_t n = 0; n < n_batches; ++n) {
    Batch batch;
    batch.n_paired = geo.n_paired;
    for (int i = 0; i < geo.n_paired; ++i, ++pi) {
      batch.images.push_back(&corpus.paired[paired_idx[pi]].first);
      batch.reports.push_back(&corpus.paired[paired_idx[pi]].second);
    }
    for (int i = 0; i < geo.n_unpaired_images; ++i, ++ii)
      batch.images.push_back(&corpus.unpaired_images[ui_idx[ii]]);
    for (int i = 0; i < geo.n_unpaired_reports; ++i, ++ri)
      batch.reports.push_back(&corpus.unpaired_reports[ur_idx[ri]]);
    batches.push_back(std::move(batch));
  }
  return batches;
}

// -- the four-stage step --------------------------------------------------------

LossBundle compute_losses(const BoundModel& model, const BatchData& data, const TrainConfig& cfg,
                          const FrozenParts* frozen) {
  LossBundle out;

  if (cfg.mode == TrainMode::GlobalBaseline) {
    std::vector<Var> img_globals, rep_globals;
    for (int i = 0; i < data.n_paired; ++i) {
      img_globals.push_back(encode_image(model, data.images[i]->patches).global);
      rep_globals.push_back(encode_text(model, data.reports[i]->all_tokens()).global);
    }
    out.global_nce =
        loss_global(concat_rows(img_globals), concat_rows(rep_globals), cfg.model.tau_1);
    out.rec = zero_scalar();
    out.paired = zero_scalar();
    out.unpaired = zero_scalar();
    out.align = zero_scalar();
    out.total = out.global_nce;
    return out;
  }

  const std::size_t n_img = data.images.size();
  const std::size_t n_rep = data.reports.size();

  // (1) Evidence space: encode phrases, reconstruct from prototypes.
  std::vector<Var> z_rows_per_report(n_rep);
  std::vector<Var> h_rep_rows(n_rep);
  std::vector<Var> rec_parts;
  for (std::size_t r = 0; r < n_rep; ++r) {
    const auto& phrases = data.phrases[r];
    if (!phrases.empty()) {
      std::vector<Var> zs;
      zs.reserve(phrases.size());
      for (const auto& ph : phrases) zs.push_back(encode_evidence(model, ph.tokens));
      z_rows_per_report[r] = concat_rows(zs);
      rec_parts.push_back(z_rows_per_report[r]);
      h_rep_rows[r] = aggregate_report(z_rows_per_report[r]);
    } else {
      // No extracted evidence: excluded from L_rec, distillation and seeding,
      // but the report still joins the text graph through its global row.
      out.empty_evidence += 1;
      h_rep_rows[r] =
          l2_normalize_rows(encode_text(model, data.reports[r]->all_tokens()).global);
    }
  }
  out.rec = rec_parts.empty()
                ? loss_rec_regularizer_only(model.prototypes, cfg.lambda_reg)
                : loss_rec(concat_rows(rec_parts), model.prototypes, cfg.model.tau_t,
                           cfg.lambda_reg);

  // (2) Lesion-level visual evidence.
  std::vector<Var> h_img_rows(n_img);
  std::vector<Var> q_bar_img(n_img);
  std::vector<Var> q_parts;
  std::vector<Var> v_parts;
  q_parts.reserve(n_img);
  v_parts.reserve(n_img);
  for (std::size_t i = 0; i < n_img; ++i) {
    ImageEncoding enc = encode_image(model, data.images[i]->patches);
    Var v = lesion_attend(model, enc.local);
    Var v_phi = project_evidence(model, v);
    Var q = lesion_distributions(v_phi, model.prototypes, cfg.model.tau_p);
    q_bar_img[i] = aggregate_image_distribution(q);
    h_img_rows[i] = aggregate_image(v_phi);
    q_parts.push_back(q);
    v_parts.push_back(v);
  }

  // Paired evidence distillation: the report side is the fixed teacher.
  out.frozen_used.teachers.assign(static_cast<std::size_t>(data.n_paired), Matrix());
  std::vector<Var> paired_terms;
  for (int i = 0; i < data.n_paired; ++i) {
    if (frozen) {
      const Matrix& teacher = frozen->teachers[static_cast<std::size_t>(i)];
      if (teacher.rows() == 0) continue;
      paired_terms.push_back(loss_paired_evidence(teacher, q_bar_img[static_cast<std::size_t>(i)]));
      out.frozen_used.teachers[static_cast<std::size_t>(i)] = teacher;
    } else {
      if (data.phrases[static_cast<std::size_t>(i)].empty()) continue;
      Var teacher = report_distribution(z_rows_per_report[static_cast<std::size_t>(i)],
                                        model.prototypes, cfg.model.tau_t);
      paired_terms.push_back(loss_paired_evidence(teacher, q_bar_img[static_cast<std::size_t>(i)]));
      out.frozen_used.teachers[static_cast<std::size_t>(i)] = teacher.value();
    }
  }
  out.paired = paired_terms.empty()
                   ? zero_scalar()
                   : scale(sum_vars(std::move(paired_terms)),
                           1.0 / static_cast<double>(std::count_if(
                                     out.frozen_used.teachers.begin(),
                                     out.frozen_used.teachers.end(),
                                     [](const Matrix& t) { return t.rows() > 0; })));

  // Unpaired kNN consistency over all lesions in the batch.
  Var q_all = concat_rows(q_parts);
  const std::size_t n_lesions = q_all.rows();
  if (n_lesions >= 2) {
    if (frozen) {
      out.frozen_used.knn = frozen->knn;
      out.frozen_used.knn_targets = frozen->knn_targets;
    } else {
      Matrix v_all(n_lesions, static_cast<std::size_t>(cfg.model.d_v));
      std::size_t row = 0;
      for (const Var& v : v_parts) {
        const Matrix& mv = v.value();
        for (std::size_t i = 0; i < mv.rows(); ++i, ++row)
          for (std::size_t j = 0; j < mv.cols(); ++j) v_all.at(row, j) = mv.at(i, j);
      }
      // Tiny batches shrink k instead of failing.
      const int k_eff = std::min<int>(cfg.knn_k, static_cast<int>(n_lesions) - 1);
      if (k_eff < cfg.knn_k)
        std::fprintf(stderr, "warning: batch has %zu lesions, shrinking knn_k from %d to %d\n",
                     n_lesions, cfg.knn_k, k_eff);
      out.frozen_used.knn = knn_neighbors(v_all, k_eff);
      out.frozen_used.knn_targets = q_all.value();
    }
    out.unpaired =
        loss_unpaired_evidence(q_all, out.frozen_used.knn, out.frozen_used.knn_targets);
  } else {
    out.unpaired = zero_scalar();
  }

  // (3) Higher-order relations from sparse seeds.
  Var h_img = concat_rows(h_img_rows);
  Var h_rep = concat_rows(h_rep_rows);
  out.y = Matrix(n_img, n_rep);
  for (int i = 0; i < data.n_paired; ++i) {
    const bool has_evidence = frozen
                                  ? frozen->teachers[static_cast<std::size_t>(i)].rows() > 0
                                  : !data.phrases[static_cast<std::size_t>(i)].empty();
    if (has_evidence) out.y.at(static_cast<std::size_t>(i), static_cast<std::size_t>(i)) = 1.0;
  }
  if (frozen) {
    out.p = frozen->p;
  } else if (n_img >= 2 && n_rep >= 2) {
    PropagationGraphs graphs = build_graphs(h_img.value(), h_rep.value(), cfg.model.tau_g);
    out.s_img = graphs.s_img;
    out.s_txt = graphs.s_txt;
    out.p = propagate(out.y, graphs.s_img, graphs.s_txt, cfg.propagation_steps);
  } else {
    out.p = normalize_rows_to_sum(out.y);
  }
  out.frozen_used.p = out.p;
  out.p_zero_rows = count_zero_rows(out.p);
  double diag = 0.0;
  for (std::size_t i = 0; i < std::min(out.p.rows(), out.p.cols()); ++i) diag += out.p.at(i, i);
  out.p_diag_mass = out.p.rows() > 0 ? diag / static_cast<double>(out.p.rows()) : 0.0;

  // (4) Evidence-guided weakly supervised alignment.
  out.align = loss_evidence_align(h_img, h_rep, out.p, cfg.model.tau_2);

  out.global_nce = zero_scalar();
  out.total = add(add(add(scale(out.rec, cfg.w_rec), scale(out.paired, cfg.w_paired)),
                      scale(out.unpaired, cfg.w_unpaired)),
                  scale(out.align, cfg.w_align));
  return out;
}

LossFn make_loss_fn(const BatchData& data, const TrainConfig& cfg, const Model& reference,
                    LossTerm term) {
  BoundModel ref_bound = bind_model(reference, false);
  LossBundle ref = compute_losses(ref_bound, data, cfg, nullptr);
  FrozenParts frozen = ref.frozen_used;
  ModelConfig mc = reference.config();
  return [data, cfg, frozen, mc, term](const std::vector<Var>& leaves) {
    BoundModel m = bind_from_leaves(mc, leaves);
    LossBundle b = compute_losses(m, data, cfg, &frozen);
    switch (term) {
      case LossTerm::Rec: return b.rec;
      case LossTerm::Paired: return b.paired;
      case LossTerm::Unpaired: return b.unpaired;
      case LossTerm::Align: return b.align;
      case LossTerm::Global: return b.global_nce;
      case LossTerm::Total: return b.total;
    }
    throw ConfigError("make_loss_fn: unknown loss term");
  };
}

// -- trainer ---------------------------------------------------------------------

TrainState init_train_state(const TrainConfig& cfg) {
  cfg.validate();
  TrainState state;
  state.model = Model(cfg.model, splitmix64(cfg.seed));
  state.opt.init_like(state.model.blocks());
  state.step = 0;
  state.rng.seed(splitmix64(cfg.seed ^ 0x7261696e65725fULL));
  state.config = cfg;
  return state;
}

namespace {
void check_corpus_fit(const Corpus& corpus, const TrainConfig& cfg) {
  if (cfg.model.vocab != corpus.world.vocab_size())
    throw ConfigError("Trainer: model vocab " + std::to_string(cfg.model.vocab) +
                      " does not match corpus vocabulary " +
                      std::to_string(corpus.world.vocab_size()));
  if (cfg.model.d_pix != corpus.world.d_pix || cfg.model.patches != corpus.config.patches)
    throw ConfigError("Trainer: model patch geometry does not match corpus");
}
}  // namespace

Trainer::Trainer(const Corpus& corpus, const TrainConfig& cfg)
    : corpus_(&corpus), state_(init_train_state(cfg)) {
  check_corpus_fit(corpus, cfg);
  build_evidence_cache();
}

Trainer::Trainer(const Corpus& corpus, TrainState state)
    : corpus_(&corpus), state_(std::move(state)) {
  check_corpus_fit(corpus, state_.config);
  build_evidence_cache();
}

void Trainer::build_evidence_cache() {
  const TrainConfig& cfg = state_.config;
  std::optional<LlmExtractor> llm;
  if (cfg.extractor == ExtractorBackend::Llm) llm.emplace(LlmExtractor::config_from_env());
  auto cache_one = [&](const Report& rep) {
    auto phrases =
        extract_evidence(rep, corpus_->world, cfg.extractor, llm ? &*llm : nullptr);
    if (!evidence_cache_.emplace(rep.id, std::move(phrases)).second)
      throw ConfigError("Trainer: duplicate report id " + std::to_string(rep.id));
  };
  for (const auto& [img, rep] : corpus_->paired) cache_one(rep);
  for (const auto& rep : corpus_->unpaired_reports) cache_one(rep);
}

const std::vector<EvidencePhrase>& Trainer::phrases_for(const Report& report) const {
  auto it = evidence_cache_.find(report.id);
  if (it == evidence_cache_.end())
    throw InputError("Trainer: report " + std::to_string(report.id) + " not in corpus");
  return it->second;
}

BatchData Trainer::prepare(const Batch& batch) const {
  BatchData data;
  data.images = batch.images;
  data.reports = batch.reports;
  data.n_paired = batch.n_paired;
  data.phrases.reserve(batch.reports.size());
  for (const Report* rep : batch.reports) data.phrases.push_back(phrases_for(*rep));
  return data;
}

namespace {
void check_finite_terms(const LossBundle& bundle, const Batch& batch, std::int64_t step) {
  const std::pair<const char*, double> terms[] = {
      {"loss_rec", bundle.rec.value().scalar()},
      {"loss_paired", bundle.paired.value().scalar()},
      {"loss_unpaired", bundle.unpaired.value().scalar()},
      {"loss_align", bundle.align.value().scalar()},
      {"loss_global", bundle.global_nce.value().scalar()},
      {"total", bundle.total.value().scalar()},
  };
  for (const auto& [name, value] : terms) {
    if (std::isfinite(value)) continue;
    std::ostringstream dump;
    dump << "non-finite " << name << " at step " << step << ";";
    for (const auto& [n2, v2] : terms) dump << ' ' << n2 << '=' << v2;
    dump << "; image ids:";
    for (const ImageSample* img : batch.images) dump << ' ' << img->id;
    dump << "; report ids:";
    for (const Report* rep : batch.reports) dump << ' ' << rep->id;
    throw NumericError(dump.str());
  }
}
}  // namespace

StepRecord Trainer::train_step(const Batch& batch) { return train_step_with_lr(batch, -1.0); }

StepRecord Trainer::train_step_with_lr(const Batch& batch, double lr_override) {
  const TrainConfig& cfg = state_.config;
  BatchData data = prepare(batch);
  BoundModel bound = bind_model(state_.model, true);
  LossBundle bundle = compute_losses(bound, data, cfg, nullptr);
  check_finite_terms(bundle, batch, state_.step);
  backward(bundle.total);

  std::vector<Matrix> grads;
  grads.reserve(bound.leaves().size());
  for (const Var& leaf : bound.leaves()) grads.push_back(leaf.grad());

  AdamWConfig opt_cfg;
  opt_cfg.lr = lr_override > 0.0 ? lr_override : cfg.learning_rate;
  opt_cfg.weight_decay = cfg.weight_decay;
  std::set<std::string> no_decay;
  if (cfg.renormalize_prototypes) no_decay.insert("prototypes");
  adamw_step(state_.model.blocks(), grads, state_.opt, opt_cfg, no_decay);
  if (cfg.renormalize_prototypes)
    state_.model.block("prototypes") = l2_normalize_rows(state_.model.block("prototypes"));

  StepRecord record;
  record.step = state_.step;
  record.loss_rec = bundle.rec.value().scalar();
  record.loss_paired = bundle.paired.value().scalar();
  record.loss_unpaired = bundle.unpaired.value().scalar();
  record.loss_align = bundle.align.value().scalar();
  record.loss_global = bundle.global_nce.value().scalar();
  record.total = bundle.total.value().scalar();
  record.p_zero_rows = bundle.p_zero_rows;
  record.empty_evidence = bundle.empty_evidence;
  record.p_diag_mass = bundle.p_diag_mass;
  state_.step += 1;
  last_bundle_y_ = bundle.y;
  last_bundle_s_img_ = bundle.s_img;
  last_bundle_s_txt_ = bundle.s_txt;
  last_bundle_p_ = bundle.p;
  return record;
}

int Trainer::steps_per_epoch(int batch_size) const {
  TrainConfig cfg = state_.config;
  cfg.batch_size = batch_size;
  const BatchGeometry geo = batch_geometry(cfg, batch_size);
  std::size_t n = geo.n_paired > 0 ? corpus_->paired.size() / geo.n_paired
                                   : std::numeric_limits<std::size_t>::max();
  if (geo.n_unpaired_images > 0)
    n = std::min(n, corpus_->unpaired_images.size() / geo.n_unpaired_images);
  if (geo.n_unpaired_reports > 0)
    n = std::min(n, corpus_->unpaired_reports.size() / geo.n_unpaired_reports);
  return static_cast<int>(n);
}

void Trainer::train(std::ostream* metrics, bool dump_relations) {
  const TrainConfig& cfg = state_.config;
  const std::vector<Phase> phases = cfg.effective_phases();
  std::int64_t position = 0;
  for (std::size_t phase_idx = 0; phase_idx < phases.size(); ++phase_idx) {
    const Phase& phase = phases[phase_idx];
    TrainConfig phase_cfg = cfg;
    phase_cfg.batch_size = phase.batch_size;
    for (int epoch = 0; epoch < phase.epochs; ++epoch) {
      const std::uint64_t epoch_seed =
          splitmix64(cfg.seed ^ splitmix64((phase_idx + 1) * 1000003ULL +
                                           static_cast<std::uint64_t>(epoch)));
      std::vector<Batch> batches = make_batches(*corpus_, phase_cfg, epoch_seed);
      for (const Batch& batch : batches) {
        if (position < state_.step) {  // resuming: skip already-executed steps
          ++position;
          continue;
        }
        StepRecord record = train_step_with_lr(batch, phase.learning_rate);
        ++position;
        if (metrics) {
          write_step_record(*metrics, record);
          if (dump_relations)
            write_relation_dump(*metrics, record.step, last_bundle_y_, last_bundle_s_img_,
                                last_bundle_s_txt_, last_bundle_p_);
        }
      }
    }
  }
}

// -- serialization ---------------------------------------------------------------

namespace {
json matrix_to_json(const Matrix& m) {
  return json{{"rows", m.rows()},
              {"cols", m.cols()},
              {"data", std::vector<double>(m.data(), m.data() + m.size())}};
}

Matrix matrix_from_json(const json& j) {
  return Matrix(j.at("rows").get<std::size_t>(), j.at("cols").get<std::size_t>(),
                j.at("data").get<std::vector<double>>());
}

json model_config_to_json(const ModelConfig& m) {
  return json{{"vocab", m.vocab},
              {"d", m.d},
              {"d_v", m.d_v},
              {"d_pix", m.d_pix},
              {"patches", m.patches},
              {"prototypes", m.prototypes},
              {"lesion_queries", m.lesion_queries},
              {"tau_t", m.tau_t},
              {"tau_p", m.tau_p},
              {"tau_g", m.tau_g},
              {"tau_1", m.tau_1},
              {"tau_2", m.tau_2},
              {"init_range", m.init_range}};
}

ModelConfig model_config_from_json(const json& j) {
  ModelConfig m;
  m.vocab = j.at("vocab").get<int>();
  m.d = j.at("d").get<int>();
  m.d_v = j.at("d_v").get<int>();
  m.d_pix = j.at("d_pix").get<int>();
  m.patches = j.at("patches").get<int>();
  m.prototypes = j.at("prototypes").get<int>();
  m.lesion_queries = j.at("lesion_queries").get<int>();
  m.tau_t = j.at("tau_t").get<double>();
  m.tau_p = j.at("tau_p").get<double>();
  m.tau_g = j.at("tau_g").get<double>();
  m.tau_1 = j.at("tau_1").get<double>();
  m.tau_2 = j.at("tau_2").get<double>();
  m.init_range = j.at("init_range").get<double>();
  return m;
}

const char* extractor_name(ExtractorBackend b) {
  switch (b) {
    case ExtractorBackend::GroundTruth: return "ground_truth";
    case ExtractorBackend::RuleBased: return "rule_based";
    case ExtractorBackend::Llm: return "llm";
  }
  return "ground_truth";
}

ExtractorBackend extractor_from_name(const std::string& name) {
  if (name == "ground_truth") return ExtractorBackend::GroundTruth;
  if (name == "rule_based") return ExtractorBackend::RuleBased;
  if (name == "llm") return ExtractorBackend::Llm;
  throw FormatError("unknown extractor backend '" + name + "'");
}

json train_config_to_json(const TrainConfig& c) {
  json phases = json::array();
  for (const Phase& p : c.phases)
    phases.push_back(json{{"epochs", p.epochs},
                          {"learning_rate", p.learning_rate},
                          {"batch_size", p.batch_size}});
  return json{{"schema_version", kConfigSchemaVersion},
              {"batch_size", c.batch_size},
              {"paired_fraction", c.paired_fraction},
              {"learning_rate", c.learning_rate},
              {"weight_decay", c.weight_decay},
              {"epochs", c.epochs},
              {"seed", c.seed},
              {"w_rec", c.w_rec},
              {"w_paired", c.w_paired},
              {"w_unpaired", c.w_unpaired},
              {"w_align", c.w_align},
              {"knn_k", c.knn_k},
              {"propagation_steps", c.propagation_steps},
              {"lambda_reg", c.lambda_reg},
              {"renormalize_prototypes", c.renormalize_prototypes},
              {"mode", train_mode_name(c.mode)},
              {"extractor", extractor_name(c.extractor)},
              {"phases", phases},
              {"model", model_config_to_json(c.model)}};
}

TrainConfig train_config_from_json(const json& j) {
  if (j.contains("schema_version") && j.at("schema_version").get<int>() != kConfigSchemaVersion)
    throw FormatError("train config: unsupported schema version");
  TrainConfig c;
  c.batch_size = j.at("batch_size").get<int>();
  c.paired_fraction = j.at("paired_fraction").get<double>();
  c.learning_rate = j.at("learning_rate").get<double>();
  c.weight_decay = j.at("weight_decay").get<double>();
  c.epochs = j.at("epochs").get<int>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.w_rec = j.at("w_rec").get<double>();
  c.w_paired = j.at("w_paired").get<double>();
  c.w_unpaired = j.at("w_unpaired").get<double>();
  c.w_align = j.at("w_align").get<double>();
  c.knn_k = j.at("knn_k").get<int>();
  c.propagation_steps = j.at("propagation_steps").get<int>();
  c.lambda_reg = j.at("lambda_reg").get<double>();
  c.renormalize_prototypes = j.at("renormalize_prototypes").get<bool>();
  c.mode = train_mode_from_name(j.at("mode").get<std::string>());
  c.extractor = extractor_from_name(j.at("extractor").get<std::string>());
  for (const auto& p : j.at("phases"))
    c.phases.push_back(Phase{p.at("epochs").get<int>(), p.at("learning_rate").get<double>(),
                             p.at("batch_size").get<int>()});
  c.model = model_config_from_json(j.at("model"));
  return c;
}
}  // namespace

const char* train_mode_name(TrainMode mode) {
  return mode == TrainMode::Lgdea ? "lgdea" : "global_baseline";
}

TrainMode train_mode_from_name(const std::string& name) {
  if (name == "lgdea") return TrainMode::Lgdea;
  if (name == "global_baseline") return TrainMode::GlobalBaseline;
  throw FormatError("unknown train mode '" + name + "'");
}

std::string train_config_to_json_string(const TrainConfig& cfg) {
  return train_config_to_json(cfg).dump();
}

TrainConfig train_config_from_json_string(const std::string& text) {
  json j = json::parse(text, nullptr, false);
  if (j.is_discarded()) throw FormatError("train config: malformed JSON");
  return train_config_from_json(j);
}

TrainConfig load_train_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("load_train_config: cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return train_config_from_json_string(ss.str());
}

void save_train_config(const TrainConfig& cfg, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw FormatError("save_train_config: cannot open " + path);
  out << train_config_to_json(cfg).dump(2) << "\n";
}

std::string config_fingerprint(const TrainConfig& cfg) {
  char hex[17];
  std::snprintf(hex, sizeof(hex), "%016llx",
                static_cast<unsigned long long>(fnv1a64(train_config_to_json(cfg).dump())));
  return std::string(hex);
}

void write_step_record(std::ostream& out, const StepRecord& r) {
  json j{{"kind", "step"},
         {"step", r.step},
         {"loss_rec", r.loss_rec},
         {"loss_paired", r.loss_paired},
         {"loss_unpaired", r.loss_unpaired},
         {"loss_align", r.loss_align},
         {"loss_global", r.loss_global},
         {"total", r.total},
         {"p_zero_rows", r.p_zero_rows},
         {"empty_evidence", r.empty_evidence},
         {"p_diag_mass", r.p_diag_mass}};
  out << j.dump() << "\n";
}

void write_relation_dump(std::ostream& out, std::int64_t step, const Matrix& y,
                         const Matrix& s_img, const Matrix& s_txt, const Matrix& p) {
  json j{{"kind", "relations"},
         {"step", step},
         {"y", matrix_to_json(y)},
         {"s_img", matrix_to_json(s_img)},
         {"s_txt", matrix_to_json(s_txt)},
         {"p", matrix_to_json(p)}};
  out << j.dump() << "\n";
}

void save_checkpoint(const TrainState& state, const std::string& path) {
  json blocks = json::array();
  for (const auto& b : state.model.blocks())
    blocks.push_back(json{{"name", b.name},
                          {"rows", b.value.rows()},
                          {"cols", b.value.cols()},
                          {"data", std::vector<double>(b.value.data(),
                                                       b.value.data() + b.value.size())}});
  json moments_m = json::array();
  json moments_v = json::array();
  for (const Matrix& m : state.opt.m) moments_m.push_back(matrix_to_json(m));
  for (const Matrix& v : state.opt.v) moments_v.push_back(matrix_to_json(v));
  std::ostringstream rng_text;
  rng_text << state.rng;
  json j{{"schema_version", kCheckpointSchemaVersion},
         {"kind", "lgdea-checkpoint"},
         {"step", state.step},
         {"opt_t", state.opt.t},
         {"rng", rng_text.str()},
         {"config", train_config_to_json(state.config)},
         {"blocks", blocks},
         {"moments_m", moments_m},
         {"moments_v", moments_v}};
  std::ofstream out(path);
  if (!out) throw FormatError("save_checkpoint: cannot open " + path);
  out << j.dump() << "\n";
  if (!out) throw FormatError("save_checkpoint: write failure on " + path);
}

TrainState load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("load_checkpoint: cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  json j = json::parse(ss.str(), nullptr, false);
  if (j.is_discarded()) throw FormatError("load_checkpoint: malformed JSON in " + path);
  if (!j.contains("kind") || j.at("kind").get<std::string>() != "lgdea-checkpoint")
    throw FormatError("load_checkpoint: " + path + " is not a checkpoint");
  if (j.at("schema_version").get<int>() != kCheckpointSchemaVersion)
    throw FormatError("load_checkpoint: unsupported schema version in " + path);

  TrainState state;
  state.config = train_config_from_json(j.at("config"));
  state.model = Model(state.config.model, 0);
  const auto expected = model_block_shapes(state.config.model);
  const json& blocks = j.at("blocks");
  if (blocks.size() != expected.size())
    throw FormatError("load_checkpoint: block count mismatch in " + path);
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    const std::string name = blocks[b].at("name").get<std::string>();
    const auto rows = blocks[b].at("rows").get<std::size_t>();
    const auto cols = blocks[b].at("cols").get<std::size_t>();
    if (name != expected[b].first ||
        rows != static_cast<std::size_t>(expected[b].second.first) ||
        cols != static_cast<std::size_t>(expected[b].second.second))
      throw FormatError("load_checkpoint: block '" + name + "' has shape " +
                        std::to_string(rows) + "x" + std::to_string(cols) +
                        ", expected '" + expected[b].first + "' " +
                        std::to_string(expected[b].second.first) + "x" +
                        std::to_string(expected[b].second.second));
    state.model.blocks()[b].value =
        Matrix(rows, cols, blocks[b].at("data").get<std::vector<double>>());
  }
  state.opt.m.clear();
  state.opt.v.clear();
  for (const auto& m : j.at("moments_m")) state.opt.m.push_back(matrix_from_json(m));
  for (const auto& v : j.at("moments_v")) state.opt.v.push_back(matrix_from_json(v));
  state.opt.t = j.at("opt_t").get<std::int64_t>();
  state.step = j.at("step").get<std::int64_t>();
  std::istringstream rng_text(j.at("rng").get<std::string>());
  rng_text >> state.rng;
  return state;
}

}  // namespace lgdea
