#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include "handuse/features.hpp"
#include "handuse/forest.hpp"
#include "handuse/harness.hpp"
#include "handuse/metrics.hpp"

namespace handuse {

/// Canonical JSON of the settings that shape a run (field order fixed).
std::string feature_config_json(const FeatureConfig& config);
FeatureConfig feature_config_from_json(std::string_view text);
std::string forest_config_json(const ForestConfig& config);  // seed and jobs excluded
ForestConfig forest_config_from_json(std::string_view text);

/// evaluation_report.json. No timestamps or host details; identical inputs
/// and config give identical bytes.
std::string report_json(const EvaluationReport& report);
/// Restores folds and config; summaries are recomputed from fold confusions.
EvaluationReport parse_report_json(std::string_view text, const std::string& source = "<memory>");
EvaluationReport load_report(const std::filesystem::path& path);

/// Table-style rows: model, condition, hand_category, average_type and the
/// five metrics (with SD columns filled for macro rows).
std::string report_csv(const EvaluationReport& report);

/// One JSON line per scored hand of the fold.
std::string predictions_jsonl(const FoldResult& fold);

/// Writes evaluation_report.json, report.csv and predictions/<participant>.jsonl.
void write_outputs(const EvaluationReport& report, const std::filesystem::path& dir);

/// Writes `text` to `path` via a temporary file and rename.
void write_file_atomic(const std::filesystem::path& path, std::string_view text);
std::string read_file(const std::filesystem::path& path);

/// Annotation row keyed by task. Files may carry a leading `task` column;
/// without it every row belongs to task "".
struct KeyedLabel {
  std::string task;
  FrameLabel label;
};
std::vector<KeyedLabel> parse_keyed_annotations(std::string_view text, const std::string& source = "<memory>");
std::vector<KeyedLabel> load_keyed_annotations(const std::filesystem::path& path);

struct AgreementSummary {
  Mode mode = Mode::interaction;
  std::size_t observations = 0;  // shared (task, frame, side) keys that enter the table
  std::size_t only_a = 0;
  std::size_t only_b = 0;
  AgreementTable table{2};
  KappaResult kappa;
  double pabak = 0;
  std::string band;
};

/// Interaction mode compares the binary interaction label on every shared
/// key; role mode compares manipulator vs stabilizer where both raters gave a
/// role. Throws when no observation is shared.
AgreementSummary agreement_summary(const std::vector<KeyedLabel>& a, const std::vector<KeyedLabel>& b, Mode mode);
std::string agreement_json(const AgreementSummary& s);

}  // namespace handuse
