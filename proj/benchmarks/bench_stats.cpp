#include <benchmark/benchmark.h>

#include <random>

#include "handuse/metrics.hpp"
#include "handuse/stats.hpp"

static void BM_MetricSet(benchmark::State& state) {
  handuse::ConfusionCounts cm{812, 95, 140, 2210};
  for (auto _ : state) {
    benchmark::DoNotOptimize(handuse::metric_set(cm));
    ++cm.tp;
  }
}
BENCHMARK(BM_MetricSet);

static void BM_StudentizedRange(benchmark::State& state) {
  for (auto _ : state) benchmark::DoNotOptimize(handuse::studentized_range_cdf(3.5, 3, 40));
}
BENCHMARK(BM_StudentizedRange)->Unit(benchmark::kMicrosecond);

static void BM_Wilcoxon(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  std::mt19937_64 gen(5);
  std::normal_distribution<double> d(0.1, 1.0);
  std::vector<double> a(n), b(n, 0.0);
  for (auto& v : a) v = d(gen);
  for (auto _ : state) benchmark::DoNotOptimize(handuse::wilcoxon_signed_rank(a, b));
}
BENCHMARK(BM_Wilcoxon)->Arg(21)->Arg(200);

static void BM_CompareModels(benchmark::State& state) {
  std::mt19937_64 gen(6);
  std::normal_distribution<double> d(0.5, 0.1);
  std::vector<double> v(21 * 3);
  for (auto& x : v) x = d(gen);
  const handuse::PairedMatrix m(21, 3, v);
  for (auto _ : state) benchmark::DoNotOptimize(handuse::compare_models(m));
}
BENCHMARK(BM_CompareModels)->Unit(benchmark::kMicrosecond);

BENCHMARK_MAIN();
