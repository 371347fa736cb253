// SPDX-License-Identifier: Apache-2.0
#include <benchmark/benchmark.h>

#include <random>

#include "lgdea/autodiff.hpp"
#include "lgdea/evidence_space.hpp"
#include "lgdea/presets.hpp"
#include "lgdea/relation.hpp"
#include "lgdea/trainer.hpp"

namespace {

lgdea::Matrix random_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  lgdea::Matrix m(rows, cols);
  for (std::size_t i = 0; i < m.size(); ++i) m[i] = dist(rng);
  return m;
}

void BM_MatmulBackward(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  lgdea::Matrix a = random_matrix(n, n, 1);
  lgdea::Matrix b = random_matrix(n, n, 2);
  for (auto _ : state) {
    lgdea::Var va = lgdea::Var::leaf(a);
    lgdea::Var vb = lgdea::Var::leaf(b);
    lgdea::Var loss = lgdea::sum_squares(lgdea::matmul(va, vb));
    lgdea::backward(loss);
    benchmark::DoNotOptimize(va.grad());
  }
}
BENCHMARK(BM_MatmulBackward)->Arg(16)->Arg(64)->Arg(128);

void BM_RowSoftmax(benchmark::State& state) {
  lgdea::Matrix x = random_matrix(static_cast<std::size_t>(state.range(0)), 64, 3);
  for (auto _ : state) {
    benchmark::DoNotOptimize(lgdea::row_softmax(x, 0.1));
  }
}
BENCHMARK(BM_RowSoftmax)->Arg(32)->Arg(256);

void BM_Propagate(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  lgdea::Matrix y(n, n);
  for (std::size_t i = 0; i < n; i += 4) y.at(i, i) = 1.0;
  lgdea::Matrix h1 = random_matrix(n, 8, 4);
  lgdea::Matrix h2 = random_matrix(n, 8, 5);
  lgdea::PropagationGraphs graphs = lgdea::build_graphs(h1, h2, 0.1);
  for (auto _ : state) {
    benchmark::DoNotOptimize(lgdea::propagate(y, graphs.s_img, graphs.s_txt, 2));
  }
}
BENCHMARK(BM_Propagate)->Arg(32)->Arg(128);

void BM_KnnNeighbors(benchmark::State& state) {
  lgdea::Matrix v = random_matrix(static_cast<std::size_t>(state.range(0)), 32, 6);
  for (auto _ : state) {
    benchmark::DoNotOptimize(lgdea::knn_neighbors(v, 5));
  }
}
BENCHMARK(BM_KnnNeighbors)->Arg(256)->Arg(1024);

void BM_TrainStep(benchmark::State& state) {
  lgdea::Preset p = lgdea::preset_by_name("small");
  p.gen.n_images = 200;
  lgdea::Corpus corpus = lgdea::generate_corpus(p.gen, 1);
  lgdea::adapt_model_to_corpus(p.train, corpus);
  p.train.model.lesion_queries = static_cast<int>(state.range(0));
  lgdea::Trainer trainer(corpus, p.train);
  std::vector<lgdea::Batch> batches = lgdea::make_batches(corpus, p.train, 7);
  std::size_t i = 0;
  for (auto _ : state) {
    trainer.train_step(batches[i++ % batches.size()]);
  }
}
BENCHMARK(BM_TrainStep)->Arg(8)->Arg(64)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
