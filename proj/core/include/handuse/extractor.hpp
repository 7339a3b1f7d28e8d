#pragma once

#include <filesystem>
#include <optional>
#include <vector>

#include "handuse/corpus.hpp"
#include "handuse/features.hpp"

namespace handuse {

/// A hand instance with one feature vector per detection candidate, in
/// candidate order (highest confidence first). No detection, no vectors.
struct ExtractedInstance {
  HandInstance instance;
  std::vector<FeatureVector> vectors;
};

struct ExtractionStats {
  std::size_t tasks_computed = 0;
  std::size_t tasks_reused = 0;
  std::size_t vectors = 0;
  std::size_t empty_masks = 0;
  std::size_t empty_regions = 0;
  std::optional<MaskSource> mask_source;

  ExtractionStats& operator+=(const ExtractionStats& o);
};

/// Compute features for every instance of `task` in `mode`. Frames are read
/// from the task's frame directory one at a time in index order.
std::vector<ExtractedInstance> extract_task(const Corpus& corpus, const Task& task, Mode mode,
                                            const FeatureConfig& config, ExtractionStats* stats = nullptr);

/// Fingerprint of the task inputs that feed extraction (frame count,
/// detections, labels, task kind).
std::uint64_t task_fingerprint(const Task& task);

/// Per-task JSONL feature cache, one file per (task, mode). A file is reused
/// only when its config hash and task fingerprint both match.
class FeatureCache {
 public:
  explicit FeatureCache(std::filesystem::path dir);

  const std::filesystem::path& dir() const noexcept { return dir_; }
  std::filesystem::path file_for(const Task& task, Mode mode) const;

  std::optional<std::vector<ExtractedInstance>> load(const Corpus& corpus, const Task& task, Mode mode,
                                                     const FeatureConfig& config,
                                                     ExtractionStats* counts = nullptr) const;
  void store(const Task& task, Mode mode, const FeatureConfig& config, const std::vector<ExtractedInstance>& instances,
             const ExtractionStats& counts) const;

 private:
  std::filesystem::path dir_;
};

/// Cache-aware extraction: reuse a matching cache file, else compute and store.
std::vector<ExtractedInstance> extract_task_cached(const Corpus& corpus, const Task& task, Mode mode,
                                                   const FeatureConfig& config, const FeatureCache* cache,
                                                   ExtractionStats* stats = nullptr);

}  // namespace handuse
