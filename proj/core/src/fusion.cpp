#include "handuse/fusion.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace handuse {
using nlohmann::json;
using nlohmann::ordered_json;

std::string_view to_string(PredictionSource s) {
  switch (s) {
    case PredictionSource::forest: return "forest";
    case PredictionSource::window_model: return "window_model";
    case PredictionSource::contact_detector: return "contact_detector";
  }
  return "?";
}

double average_duplicates(std::span<const double> probabilities) {
  if (probabilities.empty()) fail("average_duplicates: empty prediction list");
  // Summed in sorted order so the result does not depend on input order.
  std::vector<double> sorted(probabilities.begin(), probabilities.end());
  std::sort(sorted.begin(), sorted.end());
  double sum = 0;
  for (double p : sorted) {
    if (!(p >= 0.0 && p <= 1.0)) fail("average_duplicates: probability outside [0,1]");
    sum += p;
  }
  // The mean of values in [lo, hi] can round just outside that interval.
  return std::clamp(sum / static_cast<double>(sorted.size()), sorted.front(), sorted.back());
}

bool decide(double probability) noexcept { return probability >= kDecisionThreshold; }

HandPrediction fuse_probabilities(std::string task_id, int frame_index, Side side, std::span<const double> probabilities,
                                  PredictionSource source) {
  HandPrediction p;
  p.task_id = std::move(task_id);
  p.frame_index = frame_index;
  p.side = side;
  p.probability = average_duplicates(probabilities);
  p.decision = decide(*p.probability);
  p.source = source;
  return p;
}

HandPrediction missing_box_decision(std::string task_id, int frame_index, Side side, PredictionSource source) {
  HandPrediction p;
  p.task_id = std::move(task_id);
  p.frame_index = frame_index;
  p.side = side;
  p.decision = false;
  p.source = source;
  return p;
}

FrameDecisions windows_to_frames(std::span<const WindowPrediction> windows, int task_length, Mode mode,
                                 RoleTieRule tie_rule) {
  if (task_length < 0) fail("windows_to_frames: negative task length");
  const auto n = static_cast<std::size_t>(task_length);
  FrameDecisions out;
  out.decision.assign(n, false);
  out.coverage.assign(n, 0);
  std::vector<std::uint8_t> positives(n, 0);
  std::vector<int> length_at(n, 0);

  for (const auto& w : windows) {
    if (w.length <= 0) fail("windows_to_frames: window length must be positive");
    if (w.start < 0) fail("windows_to_frames: negative window start");
    const int end = std::min(task_length, w.start + w.length);
    for (int f = w.start; f < end; ++f) {
      const auto i = static_cast<std::size_t>(f);
      if (length_at[i] != 0 && length_at[i] != w.length)
        fail("windows_to_frames: overlapping windows of lengths " + std::to_string(length_at[i]) + " and " +
             std::to_string(w.length) + " at frame " + std::to_string(f));
      length_at[i] = w.length;
      if (out.coverage[i] < 255) ++out.coverage[i];
      if (w.decision && positives[i] < 255) ++positives[i];
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (out.coverage[i] == 0) {
      ++out.uncovered;
      continue;
    }
    const bool any = positives[i] > 0;
    const bool all = positives[i] == out.coverage[i];
    if (mode == Mode::interaction || tie_rule == RoleTieRule::manipulation_wins) out.decision[i] = any;
    else out.decision[i] = all;
  }
  return out;
}

bool contact_to_interaction(ContactState state) noexcept { return state == ContactState::portable_object; }

bool contact_to_interaction(std::string_view state) { return contact_to_interaction(parse_contact_state(state)); }

std::vector<WindowPrediction> parse_window_predictions(std::string_view text, const std::string& source) {
  std::vector<WindowPrediction> out;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t nl = std::min(text.find('\n', pos), text.size());
    std::string_view line = text.substr(pos, nl - pos);
    pos = nl + 1;
    ++line_no;
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.remove_suffix(1);
    if (line.empty()) continue;
    const std::string where = source + ":" + std::to_string(line_no);
    try {
      const json j = json::parse(line);
      WindowPrediction w;
      w.task_id = j.at("task").get<std::string>();
      w.side = parse_side(j.at("side").get<std::string>());
      w.start = j.at("start").get<int>();
      w.length = j.at("len").get<int>();
      w.mode = parse_mode(j.at("mode").get<std::string>());
      const json& d = j.at("decision");
      w.decision = d.is_boolean() ? d.get<bool>() : d.get<int>() != 0;
      if (w.length <= 0 || w.start < 0) fail("window start/len out of range");
      out.push_back(std::move(w));
    } catch (const json::exception& e) {
      fail(where + ": malformed window prediction: " + e.what());
    } catch (const Error& e) {
      fail(where + ": " + e.what());
    }
  }
  return out;
}

std::vector<WindowPrediction> load_window_predictions(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail_io("cannot open window predictions '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_window_predictions(ss.str(), path.string());
}

std::string serialize_window_predictions(std::span<const WindowPrediction> windows) {
  std::string out;
  for (const auto& w : windows) {
    ordered_json j;
    j["task"] = w.task_id;
    j["side"] = to_string(w.side);
    j["start"] = w.start;
    j["len"] = w.length;
    j["mode"] = to_string(w.mode);
    j["decision"] = w.decision ? 1 : 0;
    out += j.dump();
    out += '\n';
  }
  return out;
}

}  // namespace handuse
