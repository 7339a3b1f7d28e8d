#include <benchmark/benchmark.h>

#include <opencv2/core.hpp>

#include "handuse/features.hpp"
#include "handuse/masks.hpp"

namespace {

cv::Mat noise_frame(int w, int h, int seed) {
  cv::Mat img(h, w, CV_8UC3);
  cv::theRNG().state = static_cast<std::uint64_t>(seed);
  cv::randu(img, cv::Scalar::all(0), cv::Scalar::all(255));
  return img;
}

handuse::HandMask box_mask(handuse::Box b) {
  return handuse::HandMask::from_bitmap(b, std::vector<std::uint8_t>(static_cast<std::size_t>(b.w) * b.h, 1));
}

}  // namespace

static void BM_Hog(benchmark::State& state) {
  const cv::Mat img = noise_frame(720, 405, 1);
  const handuse::Box box{200, 120, 130, 150};
  for (auto _ : state) benchmark::DoNotOptimize(handuse::hog_descriptor(img, box));
}
BENCHMARK(BM_Hog);

static void BM_HsvHistograms(benchmark::State& state) {
  const cv::Mat img = noise_frame(720, 405, 2);
  const handuse::RegionSet regions(box_mask({200, 120, 130, 150}), {720, 405}, 0.5);
  for (auto _ : state) benchmark::DoNotOptimize(handuse::hsv_region_histograms(img, regions));
}
BENCHMARK(BM_HsvHistograms)->Unit(benchmark::kMillisecond);

static void BM_DenseFlow(benchmark::State& state) {
  const cv::Mat a = noise_frame(720, 405, 3);
  const cv::Mat b = noise_frame(720, 405, 4);
  for (auto _ : state) benchmark::DoNotOptimize(handuse::dense_flow(a, b));
}
BENCHMARK(BM_DenseFlow)->Unit(benchmark::kMillisecond);

static void BM_LargestComponent(benchmark::State& state) {
  const int side = static_cast<int>(state.range(0));
  std::vector<std::uint8_t> grid(static_cast<std::size_t>(side) * side);
  for (std::size_t i = 0; i < grid.size(); ++i) grid[i] = (i * 2654435761U >> 7) % 3 != 0;
  for (auto _ : state) benchmark::DoNotOptimize(handuse::largest_component(grid, side, side));
}
BENCHMARK(BM_LargestComponent)->Arg(64)->Arg(256);

BENCHMARK_MAIN();
