#include "handuse/masks.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "handuse/hash.hpp"
#include "handuse/rng.hpp"

namespace handuse {

HandMask HandMask::from_bitmap(Box bbox, std::vector<std::uint8_t> bitmap) {
  if (bitmap.size() != static_cast<std::size_t>(bbox.area())) fail("mask bitmap does not match box size");
  HandMask m;
  m.bbox = bbox;
  m.area = std::count_if(bitmap.begin(), bitmap.end(), [](std::uint8_t c) { return c != 0; });
  for (auto& c : bitmap) c = c != 0;
  m.bitmap = std::move(bitmap);
  return m;
}

Hsv to_hsv(std::uint8_t b, std::uint8_t g, std::uint8_t r) noexcept {
  const int mx = std::max({r, g, b});
  const int mn = std::min({r, g, b});
  const int delta = mx - mn;
  Hsv out;
  out.v = mx / 255.0;
  out.s = mx == 0 ? 0.0 : static_cast<double>(delta) / mx;
  if (delta == 0) return out;
  double h;
  if (mx == r) h = 60.0 * static_cast<double>(g - b) / delta;
  else if (mx == g) h = 60.0 * (2.0 + static_cast<double>(b - r) / delta);
  else h = 60.0 * (4.0 + static_cast<double>(r - g) / delta);
  if (h < 0) h += 360.0;
  if (h >= 360.0) h -= 360.0;
  out.h = h;
  return out;
}

HandMask mask_from_image(const cv::Mat& gray, Box bbox) {
  if (gray.type() != CV_8UC1) fail("mask image must be 8-bit single channel");
  const Box inside = clamp_to_frame(bbox, FrameSize{gray.cols, gray.rows});
  if (inside != bbox) fail("mask box exceeds mask image");
  std::vector<std::uint8_t> bits(static_cast<std::size_t>(bbox.area()));
  for (int y = 0; y < bbox.h; ++y) {
    const auto* row = gray.ptr<std::uint8_t>(bbox.y + y);
    for (int x = 0; x < bbox.w; ++x) bits[static_cast<std::size_t>(y) * bbox.w + x] = row[bbox.x + x] > 0;
  }
  return HandMask::from_bitmap(bbox, std::move(bits));
}

HandMask ingest_mask(const std::filesystem::path& file, Box bbox, FrameSize frame) {
  cv::Mat gray = cv::imread(file.string(), cv::IMREAD_UNCHANGED);
  if (gray.empty()) fail_io("unreadable mask '" + file.string() + "'");
  if (gray.channels() != 1) cv::cvtColor(gray, gray, gray.channels() == 4 ? cv::COLOR_BGRA2GRAY : cv::COLOR_BGR2GRAY);
  if (gray.depth() != CV_8U) gray.convertTo(gray, CV_8U);
  if (gray.cols != frame.width || gray.rows != frame.height)
    fail("mask '" + file.string() + "' is " + std::to_string(gray.cols) + "x" + std::to_string(gray.rows) +
         ", frame is " + std::to_string(frame.width) + "x" + std::to_string(frame.height));
  return mask_from_image(gray, bbox);
}

std::vector<std::uint8_t> largest_component(const std::vector<std::uint8_t>& grid, int width, int height) {
  std::vector<std::uint8_t> out(grid.size(), 0);
  if (grid.empty()) return out;
  cv::Mat src(height, width, CV_8UC1, const_cast<std::uint8_t*>(grid.data()));
  cv::Mat labels, stats, centroids;
  const int n = cv::connectedComponentsWithStats(src, labels, stats, centroids, 4, CV_32S);
  int best = 0;
  int best_area = 0;
  // Labels are assigned in raster order of first pixel, so strict > keeps the earliest on ties.
  for (int l = 1; l < n; ++l) {
    const int a = stats.at<int>(l, cv::CC_STAT_AREA);
    if (a > best_area) {
      best_area = a;
      best = l;
    }
  }
  if (best == 0) return out;
  for (int y = 0; y < height; ++y) {
    const int* row = labels.ptr<int>(y);
    for (int x = 0; x < width; ++x) out[static_cast<std::size_t>(y) * width + x] = row[x] == best;
  }
  return out;
}

HandMask heuristic_mask(const cv::Mat& frame_bgr, Box bbox, const SkinBand& band) {
  if (frame_bgr.type() != CV_8UC3) fail("heuristic mask expects an 8-bit 3-channel frame");
  const Box inside = clamp_to_frame(bbox, FrameSize{frame_bgr.cols, frame_bgr.rows});
  if (inside != bbox) fail("hand box exceeds frame");
  std::vector<std::uint8_t> grid(static_cast<std::size_t>(bbox.area()), 0);
  for (int y = 0; y < bbox.h; ++y) {
    const auto* row = frame_bgr.ptr<cv::Vec3b>(bbox.y + y);
    for (int x = 0; x < bbox.w; ++x) {
      const cv::Vec3b& px = row[bbox.x + x];
      grid[static_cast<std::size_t>(y) * bbox.w + x] = band.contains(to_hsv(px[0], px[1], px[2]));
    }
  }
  return HandMask::from_bitmap(bbox, largest_component(grid, bbox.w, bbox.h));
}

HandMask flip_pixels(const HandMask& mask, double fraction, std::uint64_t seed) {
  if (fraction <= 0.0 || mask.bitmap.empty()) return mask;
  const std::size_t n = mask.bitmap.size();
  const auto k = std::min<std::size_t>(n, static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n))));
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed);
  auto bits = mask.bitmap;
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t j = i + rng.below(n - i);
    std::swap(order[i], order[j]);
    bits[order[i]] ^= 1U;
  }
  return HandMask::from_bitmap(mask.bbox, std::move(bits));
}

std::string_view to_string(MaskSource s) { return s == MaskSource::files ? "files" : "heuristic"; }

namespace {

std::uint64_t flip_seed_for(std::uint64_t base, const std::string& task, int frame, Side side) {
  return Fnv1a().add(base).add(task).add(static_cast<std::uint64_t>(frame)).add(static_cast<std::uint64_t>(side)).value();
}

class FileMaskProvider final : public MaskProvider {
 public:
  FileMaskProvider(const Task& task, MaskOptions options) : task_(task), options_(std::move(options)) {}
  MaskSource source() const noexcept override { return MaskSource::files; }
  HandMask mask(int frame_index, Side side, Box bbox, const cv::Mat&) const override {
    auto m = ingest_mask(mask_path(task_, frame_index, side), bbox, task_.resolution);
    if (options_.flip_fraction > 0)
      m = flip_pixels(m, options_.flip_fraction, flip_seed_for(options_.flip_seed, task_.id, frame_index, side));
    return m;
  }
  bool available(int frame_index, Side side) const override {
    return std::filesystem::exists(mask_path(task_, frame_index, side));
  }

 private:
  const Task& task_;
  MaskOptions options_;
};

class HeuristicMaskProvider final : public MaskProvider {
 public:
  HeuristicMaskProvider(const Task& task, MaskOptions options) : task_(task), options_(std::move(options)) {}
  MaskSource source() const noexcept override { return MaskSource::heuristic; }
  HandMask mask(int frame_index, Side side, Box bbox, const cv::Mat& frame_bgr) const override {
    auto m = heuristic_mask(frame_bgr, bbox, options_.band);
    if (options_.flip_fraction > 0)
      m = flip_pixels(m, options_.flip_fraction, flip_seed_for(options_.flip_seed, task_.id, frame_index, side));
    return m;
  }

 private:
  const Task& task_;
  MaskOptions options_;
};

}  // namespace

std::unique_ptr<MaskProvider> make_mask_provider(const Task& task, const MaskOptions& options) {
  if (options.use_files && task.masks_dir) return std::make_unique<FileMaskProvider>(task, options);
  return std::make_unique<HeuristicMaskProvider>(task, options);
}

}  // namespace handuse
