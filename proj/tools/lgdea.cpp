// SPDX-License-Identifier: Apache-2.0
//
// Command-line front end: corpus generation, training, evaluation, gradient
// checking and relation-matrix dumps over the lgdea core library.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "lgdea/errors.hpp"
#include "lgdea/eval.hpp"
#include "lgdea/presets.hpp"
#include "lgdea/trainer.hpp"
#include "lgdea/util.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitNumeric = 2;

struct CommonOpts {
  std::string preset = "small";
  std::string mode = "lgdea";
  bool mode_given = false;
  std::uint64_t seed = 0;
  bool seed_given = false;
  std::string config_path;
};

lgdea::Preset resolve_preset(const CommonOpts& opts) {
  lgdea::Preset preset = lgdea::preset_by_name(opts.preset);
  if (!opts.config_path.empty())
    preset.train = lgdea::load_train_config(opts.config_path);
  // Explicit flags win over the config file; otherwise the file's values
  // (or the preset defaults) stand.
  if (opts.seed_given || opts.config_path.empty()) preset.train.seed = opts.seed;
  if (opts.mode_given || opts.config_path.empty())
    preset.train.mode = lgdea::train_mode_from_name(opts.mode);
  return preset;
}

int run_gen(const CommonOpts& opts, const std::string& out_path, int n_images,
            double pairing_ratio, bool cross_domain) {
  lgdea::Preset preset = resolve_preset(opts);
  lgdea::GenConfig gen = preset.gen;
  if (n_images > 0) gen.n_images = n_images;
  if (pairing_ratio > 0.0) gen.pairing_ratio = pairing_ratio;
  gen.cross_domain = cross_domain;
  lgdea::Corpus corpus = lgdea::generate_corpus(gen, opts.seed);
  lgdea::save_corpus(corpus, out_path);
  std::printf("wrote %s: %zu paired, %zu unpaired images, %zu unpaired reports\n",
              out_path.c_str(), corpus.paired.size(), corpus.unpaired_images.size(),
              corpus.unpaired_reports.size());
  return kExitOk;
}

int run_train(const CommonOpts& opts, const std::string& corpus_path, const std::string& out_dir,
              bool dump_relations) {
  lgdea::Preset preset = resolve_preset(opts);
  lgdea::Corpus corpus = lgdea::load_corpus(corpus_path);
  lgdea::adapt_model_to_corpus(preset.train, corpus);

  std::filesystem::create_directories(out_dir);
  const auto metrics_path = std::filesystem::path(out_dir) / "metrics.jsonl";
  const auto checkpoint_path = std::filesystem::path(out_dir) / "checkpoint.json";
  std::ofstream metrics(metrics_path);
  if (!metrics) throw lgdea::FormatError("cannot open " + metrics_path.string());

  lgdea::Trainer trainer(corpus, preset.train);
  trainer.train(&metrics, dump_relations);
  lgdea::save_checkpoint(trainer.state(), checkpoint_path.string());
  std::printf("trained %lld steps (mode %s); checkpoint %s, metrics %s\n",
              static_cast<long long>(trainer.state().step),
              lgdea::train_mode_name(preset.train.mode), checkpoint_path.string().c_str(),
              metrics_path.string().c_str());
  return kExitOk;
}

int run_eval(const CommonOpts& opts, const std::string& corpus_path,
             const std::string& checkpoint_path, const std::string& out_path) {
  lgdea::Corpus corpus = lgdea::load_corpus(corpus_path);
  lgdea::TrainState state = lgdea::load_checkpoint(checkpoint_path);
  lgdea::EvalConfig eval_cfg = lgdea::preset_by_name(opts.preset).eval;
  lgdea::EvalReport report =
      lgdea::evaluate(state.model, state.config.mode, corpus, opts.seed, eval_cfg,
                      lgdea::config_fingerprint(state.config));
  const std::string line = lgdea::eval_report_to_json_line(report);
  if (!out_path.empty()) {
    std::ofstream out(out_path);
    if (!out) throw lgdea::FormatError("cannot open " + out_path);
    out << line << "\n";
  }
  std::cout << lgdea::eval_report_summary(report);
  return kExitOk;
}

int run_gradcheck(const CommonOpts& opts) {
  // Compact world so the finite-difference sweep stays fast.
  lgdea::GenConfig gen;
  gen.n_images = 8;
  gen.pairing_ratio = 0.5;
  gen.n_concepts = 3;
  gen.d_pix = 6;
  gen.patches = 9;
  gen.tokens_per_concept = 4;
  gen.background_tokens = 8;
  gen.max_concepts_per_sample = 2;
  gen.max_lesion_patches = 2;
  lgdea::Corpus corpus = lgdea::generate_corpus(gen, opts.seed + 17);

  lgdea::TrainConfig cfg = lgdea::preset_by_name(opts.preset).train;
  cfg.mode = lgdea::train_mode_from_name(opts.mode);
  cfg.seed = opts.seed;
  cfg.batch_size = 4;
  cfg.paired_fraction = 0.5;
  cfg.knn_k = 3;
  cfg.model.d = 12;
  cfg.model.d_v = 10;
  cfg.model.prototypes = 16;
  cfg.model.lesion_queries = 8;
  lgdea::adapt_model_to_corpus(cfg, corpus);

  lgdea::Trainer trainer(corpus, cfg);
  lgdea::Batch batch = lgdea::make_batches(corpus, cfg, 5)[0];
  lgdea::BatchData data = trainer.prepare(batch);
  std::vector<lgdea::Matrix> params;
  for (const auto& block : trainer.state().model.blocks()) params.push_back(block.value);

  const std::pair<const char*, lgdea::LossTerm> terms[] = {
      {"loss_rec", lgdea::LossTerm::Rec},
      {"loss_paired_evidence", lgdea::LossTerm::Paired},
      {"loss_unpaired_evidence", lgdea::LossTerm::Unpaired},
      {"loss_evidence_align", lgdea::LossTerm::Align},
      {"total", lgdea::LossTerm::Total},
  };
  bool ok = true;
  if (cfg.mode == lgdea::TrainMode::Lgdea) {
    for (const auto& [name, term] : terms) {
      lgdea::LossFn fn = lgdea::make_loss_fn(data, cfg, trainer.state().model, term);
      const double err = lgdea::check_gradients(fn, params, 1e-5);
      const bool pass = err < 1e-4;
      ok = ok && pass;
      std::printf("%-24s max relative error %.3e  %s\n", name, err, pass ? "ok" : "FAIL");
    }
  } else {
    lgdea::LossFn fn =
        lgdea::make_loss_fn(data, cfg, trainer.state().model, lgdea::LossTerm::Global);
    const double err = lgdea::check_gradients(fn, params, 1e-5);
    ok = err < 1e-4;
    std::printf("%-24s max relative error %.3e  %s\n", "loss_global", err, ok ? "ok" : "FAIL");
  }
  return ok ? kExitOk : kExitNumeric;
}

int run_dump_relations(const CommonOpts& opts, const std::string& corpus_path,
                       const std::string& checkpoint_path, const std::string& out_path) {
  lgdea::Corpus corpus = lgdea::load_corpus(corpus_path);
  lgdea::Preset preset = resolve_preset(opts);
  lgdea::adapt_model_to_corpus(preset.train, corpus);

  std::optional<lgdea::Trainer> trainer;
  if (!checkpoint_path.empty()) {
    trainer.emplace(corpus, lgdea::load_checkpoint(checkpoint_path));
  } else {
    trainer.emplace(corpus, preset.train);
  }
  const lgdea::TrainConfig& cfg = trainer->state().config;
  lgdea::Batch batch = lgdea::make_batches(corpus, cfg, opts.seed)[0];
  lgdea::BatchData data = trainer->prepare(batch);
  lgdea::BoundModel bound = lgdea::bind_model(trainer->state().model, false);
  lgdea::LossBundle bundle = lgdea::compute_losses(bound, data, cfg, nullptr);

  std::ofstream out(out_path);
  if (!out) throw lgdea::FormatError("cannot open " + out_path);
  lgdea::write_relation_dump(out, trainer->state().step, bundle.y, bundle.s_img, bundle.s_txt,
                             bundle.p);
  std::printf("wrote relation matrices for one batch to %s\n", out_path.c_str());
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Evidence-aligned vision-language pretraining on synthetic corpora"};
  app.require_subcommand(1);

  CommonOpts opts;
  app.add_option("--preset", opts.preset, "Configuration preset: small or paper-shape");
  auto* mode_opt =
      app.add_option("--mode", opts.mode, "Training mode: lgdea or global_baseline");
  auto* seed_opt = app.add_option("--seed", opts.seed, "Base seed");
  app.add_option("--config", opts.config_path, "JSON training config overriding the preset");

  auto* gen = app.add_subcommand("gen", "Generate a synthetic corpus");
  std::string gen_out = "corpus.jsonl";
  int gen_images = 0;
  double gen_ratio = 0.0;
  bool gen_cross = false;
  gen->add_option("--out", gen_out, "Output corpus path");
  gen->add_option("--images", gen_images, "Override image count");
  gen->add_option("--pairing-ratio", gen_ratio, "Override pairing ratio");
  gen->add_flag("--cross-domain", gen_cross, "Shifted background for unpaired images");

  auto* train = app.add_subcommand("train", "Train a model on a corpus");
  std::string train_corpus, train_out = "run";
  bool train_dump = false;
  train->add_option("--corpus", train_corpus, "Corpus path")->required();
  train->add_option("--out", train_out, "Output directory (checkpoint + metrics)");
  train->add_flag("--dump-relations", train_dump, "Emit Y/S/P matrices per step");

  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on held-out data");
  std::string eval_corpus, eval_checkpoint, eval_out;
  eval->add_option("--corpus", eval_corpus, "Corpus path (provides the world)")->required();
  eval->add_option("--checkpoint", eval_checkpoint, "Checkpoint path")->required();
  eval->add_option("--out", eval_out, "Write the eval record here");

  auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference gradient suite");

  auto* dump = app.add_subcommand("dump-relations", "Emit Y/S/P for one batch");
  std::string dump_corpus, dump_checkpoint, dump_out = "relations.jsonl";
  dump->add_option("--corpus", dump_corpus, "Corpus path")->required();
  dump->add_option("--checkpoint", dump_checkpoint, "Optional checkpoint path");
  dump->add_option("--out", dump_out, "Output path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;  // --help exits 0
  }
  opts.mode_given = mode_opt->count() > 0;
  opts.seed_given = seed_opt->count() > 0;

  try {
    if (gen->parsed()) return run_gen(opts, gen_out, gen_images, gen_ratio, gen_cross);
    if (train->parsed()) return run_train(opts, train_corpus, train_out, train_dump);
    if (eval->parsed()) return run_eval(opts, eval_corpus, eval_checkpoint, eval_out);
    if (gradcheck->parsed()) return run_gradcheck(opts);
    if (dump->parsed()) return run_dump_relations(opts, dump_corpus, dump_checkpoint, dump_out);
  } catch (const lgdea::NumericError& e) {
    std::fprintf(stderr, "numeric failure: %s\n", e.what());
    return kExitNumeric;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitUsage;
  }
  return kExitUsage;
}
