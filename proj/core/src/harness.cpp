#include "handuse/harness.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "handuse/hash.hpp"
#include "handuse/parallel.hpp"

namespace handuse {
namespace {

std::vector<const Task*> sorted_tasks_of(const Corpus& corpus, const std::string& participant) {
  auto tasks = corpus.tasks_of(participant);
  std::sort(tasks.begin(), tasks.end(), [](const Task* a, const Task* b) { return a->id < b->id; });
  return tasks;
}

std::optional<std::string> validation_task_of(const Corpus& corpus, const std::string& participant) {
  for (const Task* t : sorted_tasks_of(corpus, participant))
    if (t->dataset == Dataset::home && t->kind == TaskKind::bimanual) return t->id;
  return std::nullopt;
}

void score(FoldResult& r, const HandInstance& inst, HandPrediction pred, bool truth) {
  r.confusion[static_cast<std::size_t>(inst.category)].add(truth, pred.decision);
  r.confusion[static_cast<std::size_t>(ReportCategory::overall)].add(truth, pred.decision);
  ++r.test_instances;
  if (!inst.has_detection()) ++r.missing_boxes;
  r.predictions.push_back(ScoredPrediction{std::move(pred), truth, inst.category});
}

std::uint64_t instance_key(const HandInstance& inst) {
  return Fnv1a().add(inst.task_id).add(static_cast<std::uint64_t>(inst.frame_index)).add(to_string(inst.side)).value();
}

std::uint64_t fold_seed(std::uint64_t seed, const std::string& participant) {
  return splitmix64(seed ^ Fnv1a().add("fold").add(participant).value());
}

}  // namespace

std::string_view to_string(ReportCategory c) {
  switch (c) {
    case ReportCategory::more_affected: return "more_affected";
    case ReportCategory::less_affected: return "less_affected";
    case ReportCategory::overall: return "overall";
  }
  return "?";
}

ReportCategory parse_report_category(std::string_view s) {
  if (s == "more_affected") return ReportCategory::more_affected;
  if (s == "less_affected") return ReportCategory::less_affected;
  if (s == "overall") return ReportCategory::overall;
  fail("unknown hand category '" + std::string(s) + "'");
}

std::vector<FoldSpec> make_folds(const Corpus& corpus, Condition condition, Mode mode) {
  std::vector<std::string> ids;
  for (const auto& p : corpus.participants()) ids.push_back(p.id);
  std::sort(ids.begin(), ids.end());

  std::map<std::string, std::string> validation;
  for (const auto& id : ids) {
    auto v = validation_task_of(corpus, id);
    if (!v) fail("participant " + id + " has no bimanual Home task for validation");
    validation[id] = *v;
  }

  std::vector<FoldSpec> folds;
  for (const auto& test : ids) {
    FoldSpec f;
    f.test_participant = test;
    f.condition = condition;
    f.mode = mode;
    for (const Task* t : sorted_tasks_of(corpus, test))
      if (t->dataset == Dataset::home) f.test_tasks.push_back(t->id);
    if (f.test_tasks.empty()) continue;
    for (const auto& other : ids) {
      if (other == test) continue;
      f.validation_tasks.push_back(validation.at(other));
      for (const Task* t : sorted_tasks_of(corpus, other)) {
        if (t->id == validation.at(other)) continue;
        if (condition == Condition::home_only && t->dataset == Dataset::homelab) continue;
        f.train_tasks.push_back(t->id);
      }
    }
    std::sort(f.train_tasks.begin(), f.train_tasks.end());
    check_fold(corpus, f);
    folds.push_back(std::move(f));
  }
  if (folds.size() < 2) fail("cross-validation needs at least 2 participants with Home tasks");
  return folds;
}

void check_fold(const Corpus& corpus, const FoldSpec& fold) {
  const std::string at = "fold " + fold.test_participant + ": ";
  std::set<std::string> expected_test;
  for (const Task* t : corpus.tasks_of(fold.test_participant))
    if (t->dataset == Dataset::home) expected_test.insert(t->id);
  const std::set<std::string> test(fold.test_tasks.begin(), fold.test_tasks.end());
  if (test != expected_test || test.size() != fold.test_tasks.size())
    fail(at + "test tasks are not exactly the participant's Home tasks");

  std::set<std::string> seen;
  for (const auto& id : fold.train_tasks) {
    const Task& t = corpus.task(id);
    if (t.participant_id == fold.test_participant) fail(at + "train task " + id + " belongs to the test participant");
    if (fold.condition == Condition::home_only && t.dataset == Dataset::homelab)
      fail(at + "HomeLab task " + id + " in a Home-only train set");
    if (!seen.insert(id).second) fail(at + "task " + id + " listed twice");
  }
  std::set<std::string> validation_owners;
  for (const auto& id : fold.validation_tasks) {
    const Task& t = corpus.task(id);
    if (t.participant_id == fold.test_participant)
      fail(at + "validation task " + id + " belongs to the test participant");
    if (t.dataset != Dataset::home || t.kind != TaskKind::bimanual)
      fail(at + "validation task " + id + " is not a bimanual Home task");
    if (!validation_owners.insert(t.participant_id).second)
      fail(at + "participant " + t.participant_id + " has more than one validation task");
    if (!seen.insert(id).second) fail(at + "task " + id + " in both train and validation");
  }
  for (const auto& p : corpus.participants())
    if (p.id != fold.test_participant && !validation_owners.contains(p.id))
      fail(at + "participant " + p.id + " has no validation task");
}

FeatureStore extract_corpus(const Corpus& corpus, Mode mode, const FeatureConfig& config, const FeatureCache* cache,
                            unsigned jobs, ExtractionStats* stats, const std::set<std::string>* only) {
  std::vector<const Task*> tasks;
  for (const auto& t : corpus.tasks())
    if (!only || only->contains(t.id)) tasks.push_back(&t);
  std::vector<std::vector<ExtractedInstance>> out(tasks.size());
  std::vector<ExtractionStats> local(tasks.size());
  parallel_for(tasks.size(), jobs,
               [&](std::size_t i) { out[i] = extract_task_cached(corpus, *tasks[i], mode, config, cache, &local[i]); });
  FeatureStore store;
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    if (stats) *stats += local[i];
    store.emplace(tasks[i]->id, std::move(out[i]));
  }
  return store;
}

std::optional<bool> instance_target(const HandInstance& inst, Mode mode) {
  if (mode == Mode::interaction) return inst.label.interaction;
  if (inst.label.role == Role::none) return std::nullopt;
  return inst.label.role == Role::manipulator;
}

TrainingSet training_set(const FeatureStore& store, const std::vector<std::string>& task_ids, Mode mode) {
  TrainingSet ts;
  for (const auto& id : task_ids) {
    const auto it = store.find(id);
    if (it == store.end()) fail("no features for task " + id);
    for (const auto& e : it->second) {
      if (e.vectors.empty()) continue;
      const auto target = instance_target(e.instance, mode);
      if (!target) continue;
      ts.add(e.vectors.front().values, *target, instance_key(e.instance));
    }
  }
  return ts;
}

HandPrediction predict_instance(const Forest& forest, const ExtractedInstance& inst) {
  const auto& hi = inst.instance;
  if (inst.vectors.empty()) return missing_box_decision(hi.task_id, hi.frame_index, hi.side, PredictionSource::forest);
  std::vector<double> probs;
  probs.reserve(inst.vectors.size());
  for (const auto& v : inst.vectors) probs.push_back(forest.predict_proba(v.values, v.layout_hash));
  return fuse_probabilities(hi.task_id, hi.frame_index, hi.side, probs, PredictionSource::forest);
}

FoldResult run_fold(const Corpus& corpus, const FoldSpec& fold, const FeatureStore& store, const ForestConfig& forest) {
  (void)corpus;
  FoldResult r;
  r.spec = fold;
  const TrainingSet ts = training_set(store, fold.train_tasks, fold.mode);
  if (ts.rows() == 0) fail("fold " + fold.test_participant + ": no training instances");
  r.train_instances = ts.rows();
  r.train_positive = static_cast<std::size_t>(std::count(ts.labels.begin(), ts.labels.end(), true));

  std::uint64_t layout_hash = 0;
  for (const auto& id : fold.train_tasks) {
    for (const auto& e : store.find(id)->second)
      if (!e.vectors.empty()) {
        layout_hash = e.vectors.front().layout_hash;
        break;
      }
    if (layout_hash != 0) break;
  }
  const Forest model = train_forest(ts, forest, layout_hash);
  r.degenerate_class = model.degenerate_class();
  if (r.degenerate_class)
    r.warnings.push_back("fold " + fold.test_participant + ": training set holds only " +
                         (*r.degenerate_class ? "positive" : "negative") + " instances; forest is constant");

  for (const auto& id : fold.test_tasks) {
    const auto it = store.find(id);
    if (it == store.end()) fail("no features for task " + id);
    for (const auto& e : it->second) {
      const auto target = instance_target(e.instance, fold.mode);
      if (!target) {
        ++r.skipped_unlabelled;
        continue;
      }
      score(r, e.instance, predict_instance(model, e), *target);
    }
  }
  if (r.skipped_unlabelled > 0)
    r.warnings.push_back("fold " + fold.test_participant + ": " + std::to_string(r.skipped_unlabelled) +
                         " interacting bimanual test instances without a role label skipped");
  return r;
}

FoldResult run_fold_windows(const Corpus& corpus, const FoldSpec& fold, const std::vector<WindowPrediction>& windows,
                            RoleTieRule tie_rule) {
  FoldResult r;
  r.spec = fold;
  for (const auto& id : fold.test_tasks) {
    const Task& task = corpus.task(id);
    std::array<FrameDecisions, 2> frames;
    for (Side side : {Side::left, Side::right}) {
      std::vector<WindowPrediction> mine;
      for (const auto& w : windows)
        if (w.task_id == id && w.side == side && w.mode == fold.mode) mine.push_back(w);
      auto& fd = frames[static_cast<std::size_t>(side)];
      fd = windows_to_frames(mine, task.frame_count, fold.mode, tie_rule);
      if (fd.uncovered > 0)
        r.warnings.push_back("task " + id + " " + std::string(to_string(side)) + ": " + std::to_string(fd.uncovered) +
                             " frames without a covering window decided negative");
    }
    for (const auto& inst : build_instances(corpus, task, fold.mode)) {
      const auto target = instance_target(inst, fold.mode);
      if (!target) {
        ++r.skipped_unlabelled;
        continue;
      }
      HandPrediction p = missing_box_decision(inst.task_id, inst.frame_index, inst.side, PredictionSource::window_model);
      if (inst.has_detection())
        p.decision = frames[static_cast<std::size_t>(inst.side)].decision.at(static_cast<std::size_t>(inst.frame_index));
      score(r, inst, std::move(p), *target);
    }
  }
  return r;
}

FoldResult run_fold_contacts(const Corpus& corpus, const FoldSpec& fold) {
  if (fold.mode != Mode::interaction) fail("external_contacts source only supports interaction mode");
  FoldResult r;
  r.spec = fold;
  for (const auto& id : fold.test_tasks) {
    const Task& task = corpus.task(id);
    for (const auto& inst : build_instances(corpus, task, fold.mode)) {
      if (!inst.has_detection()) {
        score(r, inst, missing_box_decision(inst.task_id, inst.frame_index, inst.side, PredictionSource::contact_detector),
              inst.label.interaction);
        continue;
      }
      std::vector<double> votes;
      for (const auto& d : inst.candidates) {
        if (!d.contact)
          fail("task " + id + " frame " + std::to_string(d.frame_index) + ": detection without a contact state");
        votes.push_back(contact_to_interaction(*d.contact) ? 1.0 : 0.0);
      }
      score(r, inst,
            fuse_probabilities(inst.task_id, inst.frame_index, inst.side, votes, PredictionSource::contact_detector),
            inst.label.interaction);
    }
  }
  return r;
}

void summarize(EvaluationReport& report) {
  for (std::size_t c = 0; c < kCategoryCount; ++c) {
    std::vector<MetricSet> per_fold;
    std::vector<ConfusionCounts> confusions;
    for (const auto& f : report.folds) {
      if (f.confusion[c].total() == 0) continue;
      per_fold.push_back(metric_set(f.confusion[c]));
      confusions.push_back(f.confusion[c]);
    }
    CategorySummary s;
    s.folds_used = per_fold.size();
    if (!per_fold.empty()) {
      s.macro = macro_average(per_fold);
      s.micro = micro_average(confusions);
      for (const auto& cm : confusions) s.pooled += cm;
    }
    report.summary[c] = s;
  }
}

EvaluationReport evaluate(const Corpus& corpus, const RunConfig& config, ExtractionStats* stats) {
  EvaluationReport report;
  report.config_json = config.to_json();
  report.config_hash = config.hash();
  report.model_name = config.model_name;
  report.mode = config.mode;
  report.condition = config.condition;
  report.source = config.source;

  const auto folds = make_folds(corpus, config.condition, config.mode);
  report.folds.resize(folds.size());
  switch (config.source) {
    case ModelSource::forest: {
      std::optional<FeatureCache> cache;
      if (config.use_cache) {
        if (config.cache_dir) cache.emplace(*config.cache_dir);
        else if (!config.output_dir.empty()) cache.emplace(config.output_dir / "cache");
      }
      // Only tasks some fold trains or tests on; home_only never touches HomeLab.
      std::set<std::string> used;
      for (const auto& f : folds) {
        used.insert(f.train_tasks.begin(), f.train_tasks.end());
        used.insert(f.test_tasks.begin(), f.test_tasks.end());
      }
      ExtractionStats local;
      const FeatureStore store =
          extract_corpus(corpus, config.mode, config.features, cache ? &*cache : nullptr, config.jobs, &local, &used);
      report.feature_vectors = local.vectors;
      report.empty_masks = local.empty_masks;
      report.empty_regions = local.empty_regions;
      if (stats) *stats += local;

      const unsigned fold_workers = static_cast<unsigned>(std::min<std::size_t>(std::max(1U, config.jobs), folds.size()));
      const unsigned tree_jobs = std::max(1U, config.jobs / fold_workers);
      parallel_for(folds.size(), fold_workers, [&](std::size_t i) {
        ForestConfig fc = config.forest;
        fc.seed = fold_seed(config.seed, folds[i].test_participant);
        fc.jobs = tree_jobs;
        report.folds[i] = run_fold(corpus, folds[i], store, fc);
      });
      break;
    }
    case ModelSource::external_windows: {
      if (!config.windows) fail_io("external_windows source needs a window predictions file");
      const auto windows = load_window_predictions(*config.windows);
      parallel_for(folds.size(), config.jobs,
                   [&](std::size_t i) { report.folds[i] = run_fold_windows(corpus, folds[i], windows, config.tie_rule); });
      break;
    }
    case ModelSource::external_contacts:
      parallel_for(folds.size(), config.jobs,
                   [&](std::size_t i) { report.folds[i] = run_fold_contacts(corpus, folds[i]); });
      break;
  }
  summarize(report);
  return report;
}

EvaluationReport evaluate(const RunConfig& config, ExtractionStats* stats) {
  const Corpus corpus = load_manifest(config.manifest);
  return evaluate(corpus, config, stats);
}

double EvaluationReport::fold_metric(std::size_t fold, ReportCategory category, std::string_view metric) const {
  const auto& cm = folds.at(fold).confusion[static_cast<std::size_t>(category)];
  if (cm.total() == 0) return std::numeric_limits<double>::quiet_NaN();
  const MetricSet m = metric_set(cm);
  if (metric == "mcc") return m.mcc;
  if (metric == "f1") return m.f1;
  if (metric == "precision") return m.precision;
  if (metric == "recall") return m.recall;
  if (metric == "accuracy") return m.accuracy;
  fail("unknown metric '" + std::string(metric) + "'");
}

std::vector<std::string> EvaluationReport::participants() const {
  std::vector<std::string> out;
  for (const auto& f : folds) out.push_back(f.spec.test_participant);
  return out;
}

PairedMatrix comparison_matrix(const std::vector<EvaluationReport>& reports, std::string_view metric,
                               ReportCategory category) {
  if (reports.size() < 2) fail("compare needs at least 2 reports");
  const auto rows = reports.front().participants();
  std::vector<std::string> names;
  for (std::size_t i = 0; i < reports.size(); ++i) {
    if (reports[i].participants() != rows)
      fail("report " + std::to_string(i + 1) + " (" + reports[i].model_name + ") has a different fold list");
    std::string name = reports[i].model_name;
    if (std::count(names.begin(), names.end(), name) > 0 ||
        std::count_if(reports.begin(), reports.end(), [&](const auto& r) { return r.model_name == name; }) > 1)
      name += "#" + std::to_string(i + 1);
    names.push_back(std::move(name));
  }
  std::vector<double> values(rows.size() * reports.size());
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t c = 0; c < reports.size(); ++c) {
      const double v = reports[c].fold_metric(r, category, metric);
      if (!std::isfinite(v))
        fail("fold " + rows[r] + " has no " + std::string(to_string(category)) + " instances in report " + names[c]);
      values[r * reports.size() + c] = v;
    }
  return PairedMatrix(rows.size(), reports.size(), std::move(values), rows, std::move(names));
}

ComparisonReport compare(const std::vector<EvaluationReport>& reports, std::string_view metric, ReportCategory category,
                         const ComparisonOptions& options) {
  return compare_models(comparison_matrix(reports, metric, category), options);
}

}  // namespace handuse
