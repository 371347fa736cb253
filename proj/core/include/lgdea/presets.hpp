// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>

#include "lgdea/corpus.hpp"
#include "lgdea/eval.hpp"
#include "lgdea/trainer.hpp"

namespace lgdea {

struct Preset {
  GenConfig gen;
  TrainConfig train;
  EvalConfig eval;
};

/// "small": the reference synthetic setup (8 concepts, 1000 images, 10%
/// pairing, compact K=16 / L=8 model) sized for sub-minute runs.
/// "paper-shape": K=64 / L=64 with the two-phase schedule shape.
Preset preset_by_name(const std::string& name);

/// Sizes the model to the corpus world (vocabulary, patch grid, pixel dim).
void adapt_model_to_corpus(TrainConfig& cfg, const Corpus& corpus);

}  // namespace lgdea
