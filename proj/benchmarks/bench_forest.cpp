#include <benchmark/benchmark.h>

#include <random>

#include "handuse/forest.hpp"

namespace {

handuse::TrainingSet noisy_set(std::size_t rows, std::size_t dims) {
  handuse::TrainingSet ts;
  ts.dims = dims;
  std::mt19937_64 gen(3);
  std::normal_distribution<double> n01;
  std::vector<double> x(dims);
  for (std::size_t i = 0; i < rows; ++i) {
    for (auto& v : x) v = n01(gen);
    ts.add(x, x[0] + 0.5 * x[1] > 0.2, i);
  }
  return ts;
}

}  // namespace

static void BM_TrainForest(benchmark::State& state) {
  const auto ts = noisy_set(static_cast<std::size_t>(state.range(0)), 64);
  handuse::ForestConfig cfg;
  cfg.n_trees = 20;
  cfg.seed = 1;
  for (auto _ : state) benchmark::DoNotOptimize(handuse::train_forest(ts, cfg));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_TrainForest)->Arg(500)->Arg(2000)->Unit(benchmark::kMillisecond);

static void BM_PredictProba(benchmark::State& state) {
  const auto ts = noisy_set(2000, 64);
  handuse::ForestConfig cfg;
  cfg.n_trees = 150;
  const auto forest = handuse::train_forest(ts, cfg, 9);
  std::size_t i = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(forest.predict_proba(ts.row(i), 9));
    i = (i + 1) % ts.rows();
  }
}
BENCHMARK(BM_PredictProba);

BENCHMARK_MAIN();
