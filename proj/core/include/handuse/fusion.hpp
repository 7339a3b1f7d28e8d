#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "handuse/types.hpp"

namespace handuse {

/// Decision threshold on averaged probabilities; inclusive.
inline constexpr double kDecisionThreshold = 0.5;

enum class PredictionSource : std::uint8_t { forest, window_model, contact_detector };
std::string_view to_string(PredictionSource s);

/// Final decision for one hand in one frame. `decision` is interaction in
/// interaction mode and manipulation (vs stabilization) in role mode.
struct HandPrediction {
  std::string task_id;
  int frame_index = 0;
  Side side = Side::left;
  std::optional<double> probability;  // absent when the hand had no box
  bool decision = false;
  PredictionSource source = PredictionSource::forest;
  friend bool operator==(const HandPrediction&, const HandPrediction&) = default;
};

/// Arithmetic mean of duplicate predictions for one hand. Throws on an empty
/// list or values outside [0, 1].
double average_duplicates(std::span<const double> probabilities);

/// probability >= 0.5
bool decide(double probability) noexcept;

/// Prediction from a list of duplicate probabilities (average, then threshold).
HandPrediction fuse_probabilities(std::string task_id, int frame_index, Side side, std::span<const double> probabilities,
                                  PredictionSource source);

/// A hand with no detected box: no interaction and no role.
HandPrediction missing_box_decision(std::string task_id, int frame_index, Side side, PredictionSource source);

/// One clip-level decision from an external window model.
struct WindowPrediction {
  std::string task_id;
  Side side = Side::left;
  Mode mode = Mode::interaction;
  int start = 0;
  int length = 0;
  bool decision = false;
};

/// How a frame covered by disagreeing role windows is resolved.
enum class RoleTieRule : std::uint8_t { manipulation_wins, stabilization_wins };

struct FrameDecisions {
  std::vector<bool> decision;  // one per frame
  std::vector<std::uint8_t> coverage;  // number of windows covering each frame
  std::size_t uncovered = 0;  // frames with no covering window (decided negative)
};

/// Spread window decisions onto frames. Interaction mode ORs the covering
/// decisions; role mode applies `tie_rule` when covering windows disagree.
/// Overlapping windows must share one length.
FrameDecisions windows_to_frames(std::span<const WindowPrediction> windows, int task_length, Mode mode,
                                 RoleTieRule tie_rule = RoleTieRule::manipulation_wins);

/// Only portable-object contact counts as a hand-object interaction.
bool contact_to_interaction(ContactState state) noexcept;
bool contact_to_interaction(std::string_view state);

std::vector<WindowPrediction> parse_window_predictions(std::string_view text, const std::string& source = "<memory>");
std::vector<WindowPrediction> load_window_predictions(const std::filesystem::path& path);
std::string serialize_window_predictions(std::span<const WindowPrediction> windows);

}  // namespace handuse
