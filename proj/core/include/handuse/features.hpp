#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <opencv2/core.hpp>

#include "handuse/masks.hpp"
#include "handuse/types.hpp"

namespace handuse {

using Histogram = std::vector<double>;

struct HogParams {
  int window = 64;  // crop is resized to window x window
  int cell = 8;
  int block = 2;  // cells per block side, stride one cell
  int bins = 9;   // unsigned orientation bins over [0, 180)
  double clip = 0.2;

  int length() const noexcept {
    const int blocks = window / cell - block + 1;
    return blocks * blocks * block * block * bins;
  }
};

/// Farneback polynomial-expansion parameters.
struct FlowParams {
  double pyr_scale = 0.5;
  int levels = 3;
  int window = 15;
  int iterations = 3;
  int poly_n = 5;
  double poly_sigma = 1.1;
};

struct FeatureConfig {
  int hsv_bins = 16;
  int mag_bins = 16;         // regular magnitude bins over [0, mag_range); one overflow bin follows
  double mag_range = 16.0;   // px/frame
  int dir_bins = 18;         // over [0, 360), magnitude weighted
  double min_direction_magnitude = 1e-3;
  double background_dilation = 0.5;  // hand box grown by this fraction per side before exclusion
  int size_change_frames = 10;
  HogParams hog;
  FlowParams flow;
  MaskOptions masks;

  std::uint64_t hash() const;
};

enum class Region : std::uint8_t { hand = 0, non_hand = 1, background = 2, none = 3 };

/// Pixel partition of a frame around one hand box. `hand` and `non_hand`
/// tile the box; `background` is the frame minus the dilated box.
class RegionSet {
 public:
  RegionSet(const HandMask& mask, FrameSize frame, double dilation);

  Region at(int x, int y) const noexcept {
    if (mask_->bbox.contains(x, y)) return mask_->hand_at(x, y) ? Region::hand : Region::non_hand;
    return excluded_.contains(x, y) ? Region::none : Region::background;
  }
  long long count(Region r) const noexcept { return counts_[static_cast<int>(r)]; }
  const Box& bbox() const noexcept { return mask_->bbox; }
  const Box& excluded() const noexcept { return excluded_; }
  FrameSize frame() const noexcept { return frame_; }

  /// Calls fn(x, y, region) once per pixel of the three regions, in raster order.
  template <typename Fn>
  void for_each(Fn&& fn) const {
    for (int y = 0; y < frame_.height; ++y) {
      const bool rows_overlap = y >= excluded_.y && y < excluded_.y + excluded_.h;
      if (!rows_overlap) {
        for (int x = 0; x < frame_.width; ++x) fn(x, y, Region::background);
        continue;
      }
      for (int x = 0; x < excluded_.x; ++x) fn(x, y, Region::background);
      for (int x = excluded_.x; x < excluded_.x + excluded_.w; ++x) {
        const Region r = at(x, y);
        if (r != Region::none) fn(x, y, r);
      }
      for (int x = excluded_.x + excluded_.w; x < frame_.width; ++x) fn(x, y, Region::background);
    }
  }

 private:
  const HandMask* mask_;
  Box excluded_;
  FrameSize frame_;
  std::array<long long, 3> counts_{};
};

/// Per-pixel HSV bin indices of a frame, computed once and reused per hand.
struct HsvBinMap {
  int bins = 0;
  cv::Mat map;  // CV_8UC3: hue, saturation, value bin
};
HsvBinMap compute_hsv_bins(const cv::Mat& frame_bgr, int bins);

struct HsvHistograms {
  std::array<std::array<Histogram, 3>, 3> hist;  // [channel H,S,V][region hand,non_hand,background]
  bool empty_region = false;                     // some region had no pixels; its histograms are uniform
};
HsvHistograms hsv_region_histograms(const HsvBinMap& bins, const RegionSet& regions);
HsvHistograms hsv_region_histograms(const cv::Mat& frame_bgr, const RegionSet& regions, int bins = 16);

/// Dense displacement field, CV_32FC2 (dx, dy) in px/frame.
using FlowField = cv::Mat;

/// Farneback flow from `prev` to `next` (BGR or gray). An empty `prev`
/// (first frame of a task) or identical frames give an all-zero field.
FlowField dense_flow(const cv::Mat& prev, const cv::Mat& next, const FlowParams& params = {});

struct FlowBinMap {
  cv::Mat mag_bin;  // CV_8UC1, 0..mag_bins (last = overflow)
  cv::Mat dir_bin;  // CV_8UC1
  cv::Mat weight;   // CV_64FC1 direction weight (magnitude, or 0 below threshold)
  int mag_bins = 0;
  int dir_bins = 0;
};
FlowBinMap compute_flow_bins(const FlowField& flow, const FeatureConfig& config);

struct FlowHistograms {
  std::array<Histogram, 3> magnitude;  // per region, mag_bins + 1 entries
  std::array<Histogram, 3> direction;  // per region, dir_bins entries
  bool empty_region = false;
};
FlowHistograms flow_region_histograms(const FlowBinMap& bins, const RegionSet& regions);
FlowHistograms flow_region_histograms(const FlowField& flow, const RegionSet& regions, const FeatureConfig& config = {});

/// Dalal-Triggs HOG of the box crop resized to a square window. Orientation is
/// the edge direction (gradient direction + 90 deg) folded into [0, 180).
std::vector<double> hog_descriptor(const cv::Mat& frame, Box bbox, const HogParams& params = {});

/// Frame-to-frame hand area change over a window, normalized by box area.
/// A sequence shorter than `length` is padded by repeating its last area.
std::vector<double> hand_size_change(std::span<const long long> areas, long long bbox_area, int length = 10);
std::vector<double> hand_size_change(std::span<const HandMask> masks, long long bbox_area, int length = 10);

struct Segment {
  std::string name;
  std::size_t offset = 0;
  std::size_t length = 0;
  friend bool operator==(const Segment&, const Segment&) = default;
};

struct FeatureLayout {
  Mode mode = Mode::interaction;
  std::vector<Segment> segments;

  std::size_t size() const noexcept { return segments.empty() ? 0 : segments.back().offset + segments.back().length; }
  const Segment& segment(std::string_view name) const;
  std::uint64_t hash() const;
  friend bool operator==(const FeatureLayout&, const FeatureLayout&) = default;
};

/// Segment table: hsv_diff, flow_mag_diff, flow_dir_diff, hog, then size_change in role mode.
FeatureLayout layout_for(Mode mode, const FeatureConfig& config);

struct FeatureComponents {
  std::optional<HsvHistograms> hsv;
  std::optional<FlowHistograms> flow;
  std::optional<std::vector<double>> hog;
  std::optional<std::vector<double>> size_change;
};

struct FeatureVector {
  Mode mode = Mode::interaction;
  std::vector<double> values;
  std::uint64_t layout_hash = 0;
};

/// Concatenate pairwise histogram differences (hand-non_hand, hand-background,
/// non_hand-background) per channel, then HOG, then size change in role mode.
FeatureVector assemble(Mode mode, const FeatureComponents& components, const FeatureConfig& config = {});

/// Element-wise a - b.
Histogram histogram_difference(const Histogram& a, const Histogram& b);

}  // namespace handuse
