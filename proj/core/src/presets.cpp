// SPDX-License-Identifier: Apache-2.0
#include "lgdea/presets.hpp"

#include "lgdea/errors.hpp"

namespace lgdea {

Preset preset_by_name(const std::string& name) {
  Preset p;
  if (name == "small") {
    p.gen.n_images = 1000;
    p.gen.pairing_ratio = 0.10;
    p.train.model.d = 32;
    p.train.model.d_v = 32;
    p.train.model.prototypes = 16;
    p.train.model.lesion_queries = 8;
    p.train.batch_size = 32;
    p.train.paired_fraction = 0.25;
    p.train.learning_rate = 1e-3;
    p.train.epochs = 80;
    // Calibrated for from-scratch encoders: a lighter reconstruction pull
    // keeps the text space from collapsing, stronger distillation and a kNN
    // reach beyond one image's own lesions (k > L - 1) let the unpaired data
    // carry weight.
    p.train.w_rec = 0.1;
    p.train.w_paired = 2.0;
    p.train.w_unpaired = 2.0;
    p.train.knn_k = 12;
    p.eval.n_eval_samples = 200;
    return p;
  }
  if (name == "paper-shape") {
    p.gen.n_images = 2000;
    p.gen.pairing_ratio = 0.10;
    p.train.model.prototypes = 64;
    p.train.model.lesion_queries = 64;
    p.train.paired_fraction = 0.25;
    p.train.phases = {{2, 5e-5, 128}, {5, 1e-4, 64}};
    p.eval.n_eval_samples = 200;
    return p;
  }
  throw ConfigError("unknown preset '" + name + "' (expected: small, paper-shape)");
}

void adapt_model_to_corpus(TrainConfig& cfg, const Corpus& corpus) {
  cfg.model.vocab = corpus.world.vocab_size();
  cfg.model.d_pix = corpus.world.d_pix;
  cfg.model.patches = corpus.config.patches;
}

}  // namespace lgdea
