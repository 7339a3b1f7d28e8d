#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "handuse/corpus.hpp"
#include "handuse/extractor.hpp"
#include "handuse/features.hpp"
#include "handuse/forest.hpp"
#include "handuse/fusion.hpp"
#include "handuse/metrics.hpp"
#include "handuse/stats.hpp"

namespace handuse {

/// Leave-one-participant-out split.
struct FoldSpec {
  std::string test_participant;
  Condition condition = Condition::home_only;
  Mode mode = Mode::interaction;
  std::vector<std::string> train_tasks;
  std::vector<std::string> validation_tasks;  // one bimanual Home task per non-test participant
  std::vector<std::string> test_tasks;        // every Home task of the test participant
  friend bool operator==(const FoldSpec&, const FoldSpec&) = default;
};

/// One fold per participant with Home tasks, ordered by participant id.
/// Throws naming any participant without a bimanual Home task.
std::vector<FoldSpec> make_folds(const Corpus& corpus, Condition condition, Mode mode);

/// Throws if `fold` breaks a split invariant (leakage, validation shape,
/// test coverage, HomeLab exclusion).
void check_fold(const Corpus& corpus, const FoldSpec& fold);

/// Everything that determines an evaluation run's output.
struct RunConfig {
  std::filesystem::path manifest;
  Mode mode = Mode::interaction;
  Condition condition = Condition::home_only;
  ModelSource source = ModelSource::forest;
  std::string model_name = "forest";
  std::uint64_t seed = 0;
  FeatureConfig features;
  ForestConfig forest;  // seed is overwritten per fold
  std::optional<std::filesystem::path> windows;  // external_windows predictions
  RoleTieRule tie_rule = RoleTieRule::manipulation_wins;

  // Execution details, not part of the embedded config or its hash.
  std::filesystem::path output_dir;
  bool use_cache = true;
  std::optional<std::filesystem::path> cache_dir;  // default output_dir/cache
  unsigned jobs = 1;

  std::string to_json() const;  // canonical, execution details excluded
  static RunConfig from_json(std::string_view text);
  std::uint64_t hash() const;
};

/// Features of every task (or of the tasks in `only`), keyed by task id.
using FeatureStore = std::map<std::string, std::vector<ExtractedInstance>, std::less<>>;

FeatureStore extract_corpus(const Corpus& corpus, Mode mode, const FeatureConfig& config, const FeatureCache* cache,
                            unsigned jobs, ExtractionStats* stats = nullptr,
                            const std::set<std::string>* only = nullptr);

/// Target of an instance in `mode`; nullopt for a role-mode instance whose
/// role was left unannotated.
std::optional<bool> instance_target(const HandInstance& inst, Mode mode);

/// Training rows from the first candidate of every labelled instance with a box.
TrainingSet training_set(const FeatureStore& store, const std::vector<std::string>& task_ids, Mode mode);

/// Forest prediction for one instance: duplicate candidates averaged, no box -> negative.
HandPrediction predict_instance(const Forest& forest, const ExtractedInstance& inst);

/// A prediction paired with its ground truth.
struct ScoredPrediction {
  HandPrediction prediction;
  bool truth = false;
  HandCategory category = HandCategory::more_affected;
};

inline constexpr std::size_t kCategoryCount = 3;
enum class ReportCategory : std::uint8_t { more_affected = 0, less_affected = 1, overall = 2 };
std::string_view to_string(ReportCategory c);
ReportCategory parse_report_category(std::string_view s);

struct FoldResult {
  FoldSpec spec;
  std::array<ConfusionCounts, kCategoryCount> confusion;  // overall == more + less
  std::vector<ScoredPrediction> predictions;
  std::size_t train_instances = 0;
  std::size_t train_positive = 0;
  std::size_t test_instances = 0;
  std::size_t missing_boxes = 0;
  std::size_t skipped_unlabelled = 0;
  std::optional<bool> degenerate_class;
  std::vector<std::string> warnings;
};

/// Trains on the fold's train tasks and scores its test tasks.
FoldResult run_fold(const Corpus& corpus, const FoldSpec& fold, const FeatureStore& store, const ForestConfig& forest);

/// Scores a fold from external window predictions (no training).
FoldResult run_fold_windows(const Corpus& corpus, const FoldSpec& fold, const std::vector<WindowPrediction>& windows,
                            RoleTieRule tie_rule);

/// Scores a fold from the detector's contact states (no training).
FoldResult run_fold_contacts(const Corpus& corpus, const FoldSpec& fold);

struct CategorySummary {
  MacroSummary macro;
  MetricSet micro;
  ConfusionCounts pooled;
  std::size_t folds_used = 0;  // folds with at least one instance in the category
};

struct EvaluationReport {
  std::string config_json;  // canonical RunConfig
  std::uint64_t config_hash = 0;
  std::string model_name;
  Mode mode = Mode::interaction;
  Condition condition = Condition::home_only;
  ModelSource source = ModelSource::forest;
  std::vector<FoldResult> folds;
  std::array<CategorySummary, kCategoryCount> summary;
  std::size_t feature_vectors = 0;
  std::size_t empty_masks = 0;
  std::size_t empty_regions = 0;

  /// Per-fold value of `metric` ("mcc", "f1", "precision", "recall", "accuracy").
  double fold_metric(std::size_t fold, ReportCategory category, std::string_view metric) const;
  std::vector<std::string> participants() const;
};

/// Run every fold and aggregate. `stats` receives extraction bookkeeping that
/// varies with cache state and is kept out of the report.
EvaluationReport evaluate(const Corpus& corpus, const RunConfig& config, ExtractionStats* stats = nullptr);
EvaluationReport evaluate(const RunConfig& config, ExtractionStats* stats = nullptr);

/// Aggregate fold results into macro/micro summaries.
void summarize(EvaluationReport& report);

/// Paired comparison of reports sharing one fold list; columns are models.
ComparisonReport compare(const std::vector<EvaluationReport>& reports, std::string_view metric, ReportCategory category,
                         const ComparisonOptions& options = {});
PairedMatrix comparison_matrix(const std::vector<EvaluationReport>& reports, std::string_view metric,
                               ReportCategory category);

}  // namespace handuse
