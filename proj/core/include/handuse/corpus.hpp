#pragma once

#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "handuse/types.hpp"

namespace handuse {

struct Participant {
  std::string id;
  Side affected_side = Side::left;
  std::set<Dataset> datasets;  // derived from the participant's tasks
};

/// One hand box from the external hand-object detector.
struct Detection {
  int frame_index = 0;
  Side side = Side::left;
  Box bbox;
  double confidence = 1.0;
  std::optional<ContactState> contact;
  std::optional<Box> object_bbox;
  friend bool operator==(const Detection&, const Detection&) = default;
};

/// Manual annotation of one hand in one frame.
struct FrameLabel {
  int frame_index = 0;
  Side side = Side::left;
  bool interaction = false;
  Role role = Role::none;
  friend bool operator==(const FrameLabel&, const FrameLabel&) = default;
};

struct Task {
  std::string id;
  std::string participant_id;
  Dataset dataset = Dataset::home;
  TaskKind kind = TaskKind::unimanual;
  std::filesystem::path frames_dir;
  int frame_count = 0;
  double fps = 30.0;
  FrameSize resolution;
  std::filesystem::path detections_path;
  std::filesystem::path annotations_path;
  std::optional<std::filesystem::path> masks_dir;

  std::vector<Detection> detections;  // sorted by (frame, side)
  std::vector<FrameLabel> labels;     // sorted by (frame, side)
};

/// Immutable after loading; safe to share across worker threads.
class Corpus {
 public:
  Corpus() = default;
  Corpus(std::filesystem::path root, std::vector<Participant> participants, std::vector<Task> tasks);

  const std::filesystem::path& root() const noexcept { return root_; }
  const std::vector<Participant>& participants() const noexcept { return participants_; }
  const std::vector<Task>& tasks() const noexcept { return tasks_; }

  const Participant& participant(std::string_view id) const;
  const Task& task(std::string_view id) const;
  std::vector<const Task*> tasks_of(std::string_view participant_id) const;

 private:
  std::filesystem::path root_;
  std::vector<Participant> participants_;
  std::vector<Task> tasks_;
};

/// One problem found while loading; `location` names file, line or task.
struct Issue {
  ErrorKind kind = ErrorKind::validation;
  std::string location;
  std::string message;
};

/// Load and cross-check a manifest plus every detection and annotation file
/// it references. Throws Error listing every issue found.
Corpus load_manifest(const std::filesystem::path& path);

/// Same checks as load_manifest, collecting issues instead of throwing.
std::vector<Issue> validate_manifest(const std::filesystem::path& path);

std::vector<Detection> load_detections(const std::filesystem::path& path, FrameSize frame);
std::vector<FrameLabel> load_annotations(const std::filesystem::path& path);

/// Canonical serializations. Relative paths in the manifest are written
/// relative to `manifest_dir`.
std::string serialize_manifest(const Corpus& corpus, const std::filesystem::path& manifest_dir);
std::string serialize_detections(const std::vector<Detection>& detections);
std::string serialize_annotations(const std::vector<FrameLabel>& labels);

std::vector<Detection> parse_detections(std::string_view text, FrameSize frame,
                                        const std::string& source = "<memory>");
std::vector<FrameLabel> parse_annotations(std::string_view text, const std::string& source = "<memory>");

/// Path of frame `index` inside a task's frame directory ({index:06}.png or .jpg).
std::filesystem::path frame_path(const Task& task, int index);
std::filesystem::path mask_path(const Task& task, int index, Side side);

struct LabelSummary {
  std::size_t frames = 0;  // labelled (frame, side) pairs
  std::size_t interaction = 0;
  std::size_t no_interaction = 0;
  std::size_t manipulator = 0;
  std::size_t stabilizer = 0;
};
LabelSummary summarize(const std::vector<FrameLabel>& labels);

HandCategory hand_category(const Participant& participant, Side side) noexcept;

/// One hand in one frame, the unit of classification.
struct HandInstance {
  std::string task_id;
  int frame_index = 0;
  Side side = Side::left;
  HandCategory category = HandCategory::more_affected;
  FrameLabel label;
  /// Every same-side detection in the frame, highest confidence first.
  std::vector<Detection> candidates;

  bool has_detection() const noexcept { return !candidates.empty(); }
  /// Box used for single-box features (highest-confidence candidate).
  const Box& bbox() const { return candidates.front().bbox; }
};

/// Instances of a task for `mode`. Role mode keeps only interacting frames of
/// bimanual tasks.
std::vector<HandInstance> build_instances(const Corpus& corpus, const Task& task, Mode mode);

}  // namespace handuse
