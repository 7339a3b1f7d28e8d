#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string_view>
#include <vector>

#include <opencv2/core.hpp>

#include "handuse/corpus.hpp"
#include "handuse/types.hpp"

namespace handuse {

/// Binary hand / non-hand partition of the pixels inside a hand box.
struct HandMask {
  Box bbox;
  std::vector<std::uint8_t> bitmap;  // row-major, bbox.h rows of bbox.w cells, 0 or 1
  long long area = 0;                // number of set cells

  static HandMask from_bitmap(Box bbox, std::vector<std::uint8_t> bitmap);

  /// Membership test in frame coordinates; false outside the box.
  bool hand_at(int x, int y) const noexcept {
    return bbox.contains(x, y) && bitmap[static_cast<std::size_t>(y - bbox.y) * bbox.w + (x - bbox.x)] != 0;
  }
  bool empty() const noexcept { return area == 0; }
};

/// Hue in degrees [0, 360), saturation and value in [0, 1].
struct Hsv {
  double h = 0;
  double s = 0;
  double v = 0;
};
Hsv to_hsv(std::uint8_t b, std::uint8_t g, std::uint8_t r) noexcept;

/// Skin-colour acceptance band for the heuristic segmenter.
struct SkinBand {
  double hue_min = 0.0;
  double hue_max = 50.0;
  double sat_min = 0.15;
  double sat_max = 0.9;
  double val_min = 0.2;
  double val_max = 1.0;

  bool contains(const Hsv& c) const noexcept {
    return c.h >= hue_min && c.h <= hue_max && c.s >= sat_min && c.s <= sat_max && c.v >= val_min && c.v <= val_max;
  }
};

/// Crop an 8-bit frame-aligned mask image to `bbox`; nonzero pixels are hand.
HandMask mask_from_image(const cv::Mat& gray, Box bbox);

/// Read a mask PNG. Throws on unreadable file or when its size differs from `frame`.
HandMask ingest_mask(const std::filesystem::path& file, Box bbox, FrameSize frame);

/// Skin-band thresholding inside `bbox` of a BGR frame, keeping only the
/// largest 4-connected component. Pixels outside the box are never read.
HandMask heuristic_mask(const cv::Mat& frame_bgr, Box bbox, const SkinBand& band = {});

/// Largest 4-connected component of a row-major binary grid (ties: first in raster order).
std::vector<std::uint8_t> largest_component(const std::vector<std::uint8_t>& grid, int width, int height);

/// Flip round(fraction * w * h) distinct cells chosen by `seed`.
HandMask flip_pixels(const HandMask& mask, double fraction, std::uint64_t seed);

enum class MaskSource { files, heuristic };
std::string_view to_string(MaskSource s);

struct MaskOptions {
  SkinBand band;
  bool use_files = true;       // use a task's mask directory when it has one
  double flip_fraction = 0.0;  // robustness perturbation, 0 disables
  std::uint64_t flip_seed = 0;
};

/// Supplies the hand mask for one hand box of one frame.
class MaskProvider {
 public:
  virtual ~MaskProvider() = default;
  virtual MaskSource source() const noexcept = 0;
  virtual HandMask mask(int frame_index, Side side, Box bbox, const cv::Mat& frame_bgr) const = 0;
  /// Whether a mask can be produced for this frame without error.
  virtual bool available(int /*frame_index*/, Side /*side*/) const { return true; }
};

/// Files when the task declares a mask directory (and options allow), else heuristic.
std::unique_ptr<MaskProvider> make_mask_provider(const Task& task, const MaskOptions& options);

}  // namespace handuse
