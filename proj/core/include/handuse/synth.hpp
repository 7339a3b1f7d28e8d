#pragma once

#include <cstdint>
#include <filesystem>

#include "handuse/corpus.hpp"

namespace handuse {

/// Synthetic egocentric corpus with a planted interaction signal: an
/// interacting hand's box is filled with a saturated object, a resting hand's
/// box shows the textured background. Manipulating hands change size from
/// frame to frame, stabilizing hands keep a constant size.
struct SynthConfig {
  int participants = 3;
  FrameSize frame;
  int unimanual_frames = 40;
  int bimanual_frames = 40;  // two bimanual Home tasks per participant
  int negative_frames = 30;
  int homelab_frames = 50;   // one bimanual HomeLab task per participant; 0 disables
  int block = 8;             // frames per label block
  bool write_masks = true;
  std::uint64_t seed = 7;
  unsigned jobs = 1;  // rendering threads; output does not depend on it
};

/// Participants, tasks, detections and labels, with paths under `root` but
/// nothing written to disk.
Corpus synthetic_layout(const std::filesystem::path& root, const SynthConfig& config);

/// Render frames (and masks), write detections, annotations and
/// manifest.json under `root`. Returns the manifest path.
std::filesystem::path write_synthetic_corpus(const std::filesystem::path& root, const SynthConfig& config);

}  // namespace handuse
