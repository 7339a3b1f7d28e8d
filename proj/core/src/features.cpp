#include "handuse/features.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <opencv2/imgproc.hpp>
#include <opencv2/video/tracking.hpp>

#include "handuse/hash.hpp"

namespace handuse {

std::uint64_t FeatureConfig::hash() const {
  Fnv1a h;
  h.add("features/v1")
      .add(static_cast<std::uint64_t>(hsv_bins))
      .add(static_cast<std::uint64_t>(mag_bins))
      .add(mag_range)
      .add(static_cast<std::uint64_t>(dir_bins))
      .add(min_direction_magnitude)
      .add(background_dilation)
      .add(static_cast<std::uint64_t>(size_change_frames));
  h.add(static_cast<std::uint64_t>(hog.window))
      .add(static_cast<std::uint64_t>(hog.cell))
      .add(static_cast<std::uint64_t>(hog.block))
      .add(static_cast<std::uint64_t>(hog.bins))
      .add(hog.clip);
  h.add(flow.pyr_scale)
      .add(static_cast<std::uint64_t>(flow.levels))
      .add(static_cast<std::uint64_t>(flow.window))
      .add(static_cast<std::uint64_t>(flow.iterations))
      .add(static_cast<std::uint64_t>(flow.poly_n))
      .add(flow.poly_sigma);
  const auto& b = masks.band;
  h.add(b.hue_min).add(b.hue_max).add(b.sat_min).add(b.sat_max).add(b.val_min).add(b.val_max);
  h.add(static_cast<std::uint64_t>(masks.use_files)).add(masks.flip_fraction).add(masks.flip_seed);
  return h.value();
}

RegionSet::RegionSet(const HandMask& mask, FrameSize frame, double dilation)
    : mask_(&mask), excluded_(dilate(mask.bbox, dilation, frame)), frame_(frame) {
  if (clamp_to_frame(mask.bbox, frame) != mask.bbox) fail("hand box exceeds frame");
  counts_[0] = mask.area;
  counts_[1] = mask.bbox.area() - mask.area;
  counts_[2] = static_cast<long long>(frame.width) * frame.height - excluded_.area();
}

namespace {

int bin_of(double value, double upper, int bins) {
  const int b = static_cast<int>(value / upper * bins);
  return std::clamp(b, 0, bins - 1);
}

void normalize_or_uniform(Histogram& h, bool& empty_flag) {
  double total = 0;
  for (double v : h) total += v;
  if (total > 0) {
    for (double& v : h) v /= total;
  } else {
    std::fill(h.begin(), h.end(), 1.0 / static_cast<double>(h.size()));
    empty_flag = true;
  }
}

}  // namespace

HsvBinMap compute_hsv_bins(const cv::Mat& frame_bgr, int bins) {
  if (frame_bgr.type() != CV_8UC3) fail("HSV histograms expect an 8-bit 3-channel frame");
  if (bins < 1 || bins > 255) fail("HSV bin count must be in [1,255]");
  HsvBinMap out;
  out.bins = bins;
  out.map.create(frame_bgr.rows, frame_bgr.cols, CV_8UC3);
  for (int y = 0; y < frame_bgr.rows; ++y) {
    const auto* src = frame_bgr.ptr<cv::Vec3b>(y);
    auto* dst = out.map.ptr<cv::Vec3b>(y);
    for (int x = 0; x < frame_bgr.cols; ++x) {
      const Hsv c = to_hsv(src[x][0], src[x][1], src[x][2]);
      dst[x] = cv::Vec3b(static_cast<std::uint8_t>(bin_of(c.h, 360.0, bins)),
                         static_cast<std::uint8_t>(bin_of(c.s, 1.0, bins)),
                         static_cast<std::uint8_t>(bin_of(c.v, 1.0, bins)));
    }
  }
  return out;
}

HsvHistograms hsv_region_histograms(const HsvBinMap& bins, const RegionSet& regions) {
  const FrameSize f = regions.frame();
  if (bins.map.cols != f.width || bins.map.rows != f.height) fail("HSV bin map does not match region frame");
  HsvHistograms out;
  for (auto& channel : out.hist)
    for (auto& h : channel) h.assign(static_cast<std::size_t>(bins.bins), 0.0);
  regions.for_each([&](int x, int y, Region r) {
    const cv::Vec3b& b = bins.map.at<cv::Vec3b>(y, x);
    const int ri = static_cast<int>(r);
    out.hist[0][ri][b[0]] += 1.0;
    out.hist[1][ri][b[1]] += 1.0;
    out.hist[2][ri][b[2]] += 1.0;
  });
  for (auto& channel : out.hist)
    for (auto& h : channel) normalize_or_uniform(h, out.empty_region);
  return out;
}

HsvHistograms hsv_region_histograms(const cv::Mat& frame_bgr, const RegionSet& regions, int bins) {
  return hsv_region_histograms(compute_hsv_bins(frame_bgr, bins), regions);
}

namespace {

cv::Mat to_gray(const cv::Mat& img) {
  if (img.channels() == 1) return img;
  cv::Mat gray;
  cv::cvtColor(img, gray, cv::COLOR_BGR2GRAY);
  return gray;
}

}  // namespace

FlowField dense_flow(const cv::Mat& prev, const cv::Mat& next, const FlowParams& params) {
  if (next.empty()) fail("dense_flow: empty frame");
  FlowField flow = cv::Mat::zeros(next.rows, next.cols, CV_32FC2);
  if (prev.empty()) return flow;
  if (prev.size() != next.size() || prev.type() != next.type()) fail("dense_flow: frame size or type mismatch");
  if (cv::norm(prev, next, cv::NORM_INF) == 0) return flow;
  cv::calcOpticalFlowFarneback(to_gray(prev), to_gray(next), flow, params.pyr_scale, params.levels, params.window,
                               params.iterations, params.poly_n, params.poly_sigma, 0);
  return flow;
}

FlowBinMap compute_flow_bins(const FlowField& flow, const FeatureConfig& config) {
  if (flow.type() != CV_32FC2) fail("flow field must be CV_32FC2");
  FlowBinMap out;
  out.mag_bins = config.mag_bins;
  out.dir_bins = config.dir_bins;
  out.mag_bin.create(flow.rows, flow.cols, CV_8UC1);
  out.dir_bin.create(flow.rows, flow.cols, CV_8UC1);
  out.weight.create(flow.rows, flow.cols, CV_64FC1);
  const double mag_width = config.mag_range / config.mag_bins;
  const double dir_width = 360.0 / config.dir_bins;
  for (int y = 0; y < flow.rows; ++y) {
    const auto* f = flow.ptr<cv::Vec2f>(y);
    auto* mb = out.mag_bin.ptr<std::uint8_t>(y);
    auto* db = out.dir_bin.ptr<std::uint8_t>(y);
    auto* w = out.weight.ptr<double>(y);
    for (int x = 0; x < flow.cols; ++x) {
      const double dx = f[x][0];
      const double dy = f[x][1];
      if (!std::isfinite(dx) || !std::isfinite(dy)) fail("non-finite flow value");
      const double mag = std::sqrt(dx * dx + dy * dy);
      mb[x] = static_cast<std::uint8_t>(mag >= config.mag_range ? config.mag_bins
                                                                 : std::min(config.mag_bins - 1, static_cast<int>(mag / mag_width)));
      double angle = std::atan2(dy, dx) * 180.0 / std::numbers::pi;
      if (angle < 0) angle += 360.0;
      db[x] = static_cast<std::uint8_t>(std::clamp(static_cast<int>(angle / dir_width), 0, config.dir_bins - 1));
      w[x] = mag >= config.min_direction_magnitude ? mag : 0.0;
    }
  }
  return out;
}

FlowHistograms flow_region_histograms(const FlowBinMap& bins, const RegionSet& regions) {
  const FrameSize f = regions.frame();
  if (bins.mag_bin.cols != f.width || bins.mag_bin.rows != f.height) fail("flow field does not match region frame");
  FlowHistograms out;
  for (auto& h : out.magnitude) h.assign(static_cast<std::size_t>(bins.mag_bins + 1), 0.0);
  for (auto& h : out.direction) h.assign(static_cast<std::size_t>(bins.dir_bins), 0.0);
  regions.for_each([&](int x, int y, Region r) {
    const int ri = static_cast<int>(r);
    out.magnitude[ri][bins.mag_bin.at<std::uint8_t>(y, x)] += 1.0;
    out.direction[ri][bins.dir_bin.at<std::uint8_t>(y, x)] += bins.weight.at<double>(y, x);
  });
  bool ignored = false;
  for (int r = 0; r < 3; ++r) {
    normalize_or_uniform(out.magnitude[r], out.empty_region);
    // A region without motion has no defined direction: uniform is the convention, not a warning.
    normalize_or_uniform(out.direction[r], ignored);
  }
  return out;
}

FlowHistograms flow_region_histograms(const FlowField& flow, const RegionSet& regions, const FeatureConfig& config) {
  return flow_region_histograms(compute_flow_bins(flow, config), regions);
}

std::vector<double> hog_descriptor(const cv::Mat& frame, Box bbox, const HogParams& params) {
  if (bbox.empty()) fail("HOG: degenerate box");
  if (params.window % params.cell != 0 || params.window / params.cell < params.block) fail("HOG: inconsistent geometry");
  if (clamp_to_frame(bbox, FrameSize{frame.cols, frame.rows}) != bbox) fail("HOG: box exceeds frame");

  cv::Mat crop = to_gray(frame(cv::Rect(bbox.x, bbox.y, bbox.w, bbox.h)));
  cv::Mat resized;
  cv::resize(crop, resized, cv::Size(params.window, params.window), 0, 0, cv::INTER_LINEAR);
  cv::Mat img;
  resized.convertTo(img, CV_64F);

  const int n = params.window;
  const int cells = n / params.cell;
  const double bin_width = 180.0 / params.bins;
  std::vector<double> cell_hist(static_cast<std::size_t>(cells * cells * params.bins), 0.0);

  for (int y = 0; y < n; ++y) {
    const double* up = img.ptr<double>(std::max(0, y - 1));
    const double* row = img.ptr<double>(y);
    const double* down = img.ptr<double>(std::min(n - 1, y + 1));
    for (int x = 0; x < n; ++x) {
      const double gx = row[std::min(n - 1, x + 1)] - row[std::max(0, x - 1)];
      const double gy = down[x] - up[x];
      const double mag = std::hypot(gx, gy);
      if (mag == 0) continue;
      double orient = std::atan2(gy, gx) * 180.0 / std::numbers::pi + 90.0;
      orient = std::fmod(orient, 180.0);
      if (orient < 0) orient += 180.0;
      const double pos = orient / bin_width - 0.5;
      const double lo = std::floor(pos);
      const double frac = pos - lo;
      const int b0 = (static_cast<int>(lo) + params.bins) % params.bins;
      const int b1 = (b0 + 1) % params.bins;
      double* h = &cell_hist[static_cast<std::size_t>(((y / params.cell) * cells + x / params.cell) * params.bins)];
      h[b0] += mag * (1.0 - frac);
      h[b1] += mag * frac;
    }
  }

  constexpr double eps2 = 1e-12;
  const int blocks = cells - params.block + 1;
  const int block_len = params.block * params.block * params.bins;
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(blocks * blocks * block_len));
  std::vector<double> v(static_cast<std::size_t>(block_len));
  for (int by = 0; by < blocks; ++by) {
    for (int bx = 0; bx < blocks; ++bx) {
      std::size_t k = 0;
      for (int cy = by; cy < by + params.block; ++cy)
        for (int cx = bx; cx < bx + params.block; ++cx)
          for (int b = 0; b < params.bins; ++b) v[k++] = cell_hist[static_cast<std::size_t>((cy * cells + cx) * params.bins + b)];
      // L2-Hys: normalize, clip, renormalize.
      for (int pass = 0; pass < 2; ++pass) {
        double ss = 0;
        for (double e : v) ss += e * e;
        const double norm = std::sqrt(ss + eps2);
        for (double& e : v) {
          e /= norm;
          if (pass == 0) e = std::min(e, params.clip);
        }
      }
      out.insert(out.end(), v.begin(), v.end());
    }
  }
  return out;
}

std::vector<double> hand_size_change(std::span<const long long> areas, long long bbox_area, int length) {
  if (areas.empty()) fail("hand_size_change: empty area sequence");
  if (bbox_area <= 0) fail("hand_size_change: non-positive box area");
  if (length < 2) fail("hand_size_change: window shorter than two frames");
  std::vector<long long> padded(areas.begin(), areas.begin() + std::min<std::ptrdiff_t>(std::ssize(areas), length));
  padded.resize(static_cast<std::size_t>(length), padded.back());
  std::vector<double> out(static_cast<std::size_t>(length - 1));
  for (std::size_t i = 0; i + 1 < padded.size(); ++i)
    out[i] = static_cast<double>(padded[i + 1] - padded[i]) / static_cast<double>(bbox_area);
  return out;
}

std::vector<double> hand_size_change(std::span<const HandMask> masks, long long bbox_area, int length) {
  std::vector<long long> areas;
  areas.reserve(masks.size());
  for (const auto& m : masks) areas.push_back(m.area);
  return hand_size_change(areas, bbox_area, length);
}

const Segment& FeatureLayout::segment(std::string_view name) const {
  for (const auto& s : segments)
    if (s.name == name) return s;
  fail("feature layout has no segment '" + std::string(name) + "'");
}

std::uint64_t FeatureLayout::hash() const {
  Fnv1a h;
  h.add("layout/v1").add(to_string(mode));
  for (const auto& s : segments) h.add(s.name).add(static_cast<std::uint64_t>(s.offset)).add(static_cast<std::uint64_t>(s.length));
  return h.value();
}

FeatureLayout layout_for(Mode mode, const FeatureConfig& config) {
  FeatureLayout layout;
  layout.mode = mode;
  std::size_t offset = 0;
  auto add = [&](std::string name, std::size_t len) {
    layout.segments.push_back(Segment{std::move(name), offset, len});
    offset += len;
  };
  add("hsv_diff", 3U * 3U * static_cast<std::size_t>(config.hsv_bins));
  add("flow_mag_diff", 3U * static_cast<std::size_t>(config.mag_bins + 1));
  add("flow_dir_diff", 3U * static_cast<std::size_t>(config.dir_bins));
  add("hog", static_cast<std::size_t>(config.hog.length()));
  if (mode == Mode::role) add("size_change", static_cast<std::size_t>(config.size_change_frames - 1));
  return layout;
}

Histogram histogram_difference(const Histogram& a, const Histogram& b) {
  if (a.size() != b.size()) fail("histogram size mismatch");
  Histogram d(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) d[i] = a[i] - b[i];
  return d;
}

FeatureVector assemble(Mode mode, const FeatureComponents& c, const FeatureConfig& config) {
  if (!c.hsv) fail("assemble: missing HSV histograms");
  if (!c.flow) fail("assemble: missing flow histograms");
  if (!c.hog) fail("assemble: missing HOG descriptor");
  if (mode == Mode::role && !c.size_change) fail("assemble: missing size-change vector in role mode");

  const FeatureLayout layout = layout_for(mode, config);
  FeatureVector out;
  out.mode = mode;
  out.layout_hash = layout.hash();
  out.values.reserve(layout.size());

  constexpr std::array<std::pair<int, int>, 3> pairs{{{0, 1}, {0, 2}, {1, 2}}};
  auto append_diffs = [&](const std::array<Histogram, 3>& regions, std::size_t bins) {
    for (const auto& [a, b] : pairs) {
      if (regions[a].size() != bins || regions[b].size() != bins) fail("assemble: histogram bin count differs from config");
      const auto d = histogram_difference(regions[a], regions[b]);
      out.values.insert(out.values.end(), d.begin(), d.end());
    }
  };
  for (const auto& channel : c.hsv->hist) append_diffs(channel, static_cast<std::size_t>(config.hsv_bins));
  append_diffs(c.flow->magnitude, static_cast<std::size_t>(config.mag_bins + 1));
  append_diffs(c.flow->direction, static_cast<std::size_t>(config.dir_bins));
  if (c.hog->size() != static_cast<std::size_t>(config.hog.length())) fail("assemble: HOG length differs from config");
  out.values.insert(out.values.end(), c.hog->begin(), c.hog->end());
  if (mode == Mode::role) {
    if (c.size_change->size() != static_cast<std::size_t>(config.size_change_frames - 1))
      fail("assemble: size-change length differs from config");
    out.values.insert(out.values.end(), c.size_change->begin(), c.size_change->end());
  }
  if (out.values.size() != layout.size()) fail("assemble: layout size mismatch");
  for (double v : out.values)
    if (!std::isfinite(v)) fail("assemble: non-finite feature value");
  return out;
}

}  // namespace handuse
