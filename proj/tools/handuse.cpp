#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "handuse/corpus.hpp"
#include "handuse/harness.hpp"
#include "handuse/hash.hpp"
#include "handuse/report.hpp"
#include "handuse/synth.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using namespace handuse;
using nlohmann::ordered_json;

namespace {

unsigned default_jobs() {
  if (const char* env = std::getenv("HANDUSE_JOBS")) {
    try {
      const int v = std::stoi(env);
      if (v > 0) return static_cast<unsigned>(v);
    } catch (...) {
    }
    std::cerr << "warning: ignoring invalid HANDUSE_JOBS='" << env << "'\n";
  }
  return std::max(1U, std::thread::hardware_concurrency());
}

struct FeatureFlags {
  int hsv_bins = 16;
  int mag_bins = 16;
  int dir_bins = 18;
  bool heuristic_masks = false;
  double mask_flip = 0.0;
  std::uint64_t mask_flip_seed = 0;

  void add(CLI::App* app) {
    app->add_option("--hsv-bins", hsv_bins, "HSV histogram bins per channel")->check(CLI::PositiveNumber);
    app->add_option("--mag-bins", mag_bins, "regular flow magnitude bins")->check(CLI::PositiveNumber);
    app->add_option("--dir-bins", dir_bins, "flow direction bins")->check(CLI::PositiveNumber);
    app->add_flag("--heuristic-masks", heuristic_masks, "ignore mask files and segment skin in the box");
    app->add_option("--mask-flip", mask_flip, "fraction of mask pixels to flip")->check(CLI::Range(0.0, 1.0));
    app->add_option("--mask-flip-seed", mask_flip_seed, "seed of the mask perturbation");
  }
  FeatureConfig config() const {
    FeatureConfig c;
    c.hsv_bins = hsv_bins;
    c.mag_bins = mag_bins;
    c.dir_bins = dir_bins;
    c.masks.use_files = !heuristic_masks;
    c.masks.flip_fraction = mask_flip;
    c.masks.flip_seed = mask_flip_seed;
    return c;
  }
};

struct ForestFlags {
  int trees = 150;
  int max_features = 0;
  int min_leaf = 1;
  int max_depth = 0;
  double class_weight = 1.0;
  std::string weighted_class = "minority";

  void add(CLI::App* app) {
    app->add_option("--trees", trees, "number of trees")->check(CLI::PositiveNumber);
    app->add_option("--max-features", max_features, "features per split, 0 = ceil(sqrt(d))")->check(CLI::NonNegativeNumber);
    app->add_option("--min-leaf", min_leaf, "minimum samples per leaf")->check(CLI::PositiveNumber);
    app->add_option("--max-depth", max_depth, "depth limit, 0 = unlimited")->check(CLI::NonNegativeNumber);
    app->add_option("--class-weight", class_weight, "sample weight of the weighted class")->check(CLI::PositiveNumber);
    app->add_option("--weighted-class", weighted_class, "class receiving --class-weight")
        ->check(CLI::IsMember({"minority", "positive", "negative"}));
  }
  ForestConfig config() const {
    ForestConfig c;
    c.n_trees = trees;
    c.max_features = max_features;
    c.min_leaf = min_leaf;
    if (max_depth > 0) c.max_depth = max_depth;
    c.class_weight_ratio = class_weight;
    c.weighted_class = weighted_class == "positive"   ? WeightedClass::positive
                       : weighted_class == "negative" ? WeightedClass::negative
                                                      : WeightedClass::minority;
    c.validate();
    return c;
  }
};

int cmd_validate(const fs::path& manifest, bool as_json) {
  const auto issues = validate_manifest(manifest);
  if (as_json) {
    ordered_json j;
    j["manifest"] = manifest.string();
    j["valid"] = issues.empty();
    j["issues"] = ordered_json::array();
    for (const auto& i : issues)
      j["issues"].push_back(
          {{"kind", i.kind == ErrorKind::io ? "io" : "validation"}, {"location", i.location}, {"message", i.message}});
    std::cout << j.dump(2) << "\n";
  } else if (issues.empty()) {
    const Corpus c = load_manifest(manifest);
    std::cout << "ok: " << c.participants().size() << " participants, " << c.tasks().size() << " tasks\n";
  } else {
    for (const auto& i : issues)
      std::cerr << (i.kind == ErrorKind::io ? "io" : "validation") << ": " << i.location << ": " << i.message << "\n";
  }
  return issues.empty() ? 0 : 1;
}

std::optional<FeatureCache> make_cache(const std::optional<fs::path>& dir) {
  if (!dir) return std::nullopt;
  return FeatureCache(*dir);
}

std::vector<std::string> select_tasks(const Corpus& corpus, const std::vector<std::string>& tasks,
                                      const std::vector<std::string>& participants, const std::string& exclude) {
  std::vector<std::string> out;
  for (const auto& t : corpus.tasks()) {
    if (!tasks.empty() && std::find(tasks.begin(), tasks.end(), t.id) == tasks.end()) continue;
    if (!participants.empty() && std::find(participants.begin(), participants.end(), t.participant_id) == participants.end())
      continue;
    if (!exclude.empty() && t.participant_id == exclude) continue;
    out.push_back(t.id);
  }
  for (const auto& t : tasks) (void)corpus.task(t);
  if (out.empty()) fail("no tasks selected");
  return out;
}

ordered_json stats_json(const ExtractionStats& s) {
  ordered_json j;
  j["tasks_computed"] = s.tasks_computed;
  j["tasks_reused"] = s.tasks_reused;
  j["vectors"] = s.vectors;
  j["empty_masks"] = s.empty_masks;
  j["empty_regions"] = s.empty_regions;
  j["mask_source"] = s.mask_source ? ordered_json(std::string(to_string(*s.mask_source))) : ordered_json(nullptr);
  return j;
}

void print_summary(const EvaluationReport& r, const fs::path& dir) {
  std::cout << "model " << r.model_name << ", " << to_string(r.condition) << ", " << to_string(r.mode) << " -> "
            << dir.string() << "\n";
  for (std::size_t c = 0; c < kCategoryCount; ++c) {
    const auto& s = r.summary[c];
    if (s.folds_used == 0) continue;
    std::printf("  %-14s macro MCC %.3f +/- %.3f  micro MCC %.3f  macro F1 %.3f\n",
                std::string(to_string(static_cast<ReportCategory>(c))).c_str(), s.macro.mean.mcc, s.macro.sd.mcc,
                s.micro.mcc, s.macro.mean.f1);
  }
  for (const auto& f : r.folds)
    for (const auto& w : f.warnings) std::cerr << "warning: " << w << "\n";
}

int run(int argc, char** argv) {
  CLI::App app{"Hand-object interaction and hand role detection from egocentric video"};
  app.require_subcommand(1);
  unsigned jobs = default_jobs();
  app.add_option("--jobs,-j", jobs, "worker threads (default: HANDUSE_JOBS or core count)")->check(CLI::PositiveNumber);

  // validate
  auto* validate = app.add_subcommand("validate", "check a manifest and every file it references");
  fs::path v_manifest;
  bool v_json = false;
  validate->add_option("manifest", v_manifest, "manifest.json")->required();
  validate->add_flag("--json", v_json, "print the issue list as JSON");

  // extract
  auto* extract = app.add_subcommand("extract", "compute and cache feature vectors");
  fs::path x_manifest, x_cache;
  std::string x_mode = "interaction";
  FeatureFlags x_features;
  extract->add_option("--manifest", x_manifest)->required();
  extract->add_option("--mode", x_mode)->check(CLI::IsMember({"interaction", "role"}));
  extract->add_option("--cache-dir", x_cache, "feature cache directory")->required();
  x_features.add(extract);

  // train
  auto* train = app.add_subcommand("train", "train a forest on selected tasks");
  fs::path t_manifest, t_out;
  std::optional<fs::path> t_cache;
  std::string t_mode = "interaction", t_exclude;
  std::vector<std::string> t_tasks, t_participants;
  std::uint64_t t_seed = 0;
  FeatureFlags t_features;
  ForestFlags t_forest;
  train->add_option("--manifest", t_manifest)->required();
  train->add_option("--mode", t_mode)->check(CLI::IsMember({"interaction", "role"}));
  train->add_option("--tasks", t_tasks, "task ids (default: all)");
  train->add_option("--participants", t_participants, "participant ids (default: all)");
  train->add_option("--exclude-participant", t_exclude);
  train->add_option("--seed", t_seed);
  train->add_option("--cache-dir", t_cache);
  train->add_option("--out", t_out, "model file")->required();
  t_features.add(train);
  t_forest.add(train);

  // predict
  auto* predict = app.add_subcommand("predict", "apply a trained model to tasks");
  fs::path p_manifest, p_model, p_out;
  std::optional<fs::path> p_cache;
  std::vector<std::string> p_tasks, p_participants;
  predict->add_option("--manifest", p_manifest)->required();
  predict->add_option("--model", p_model)->required();
  predict->add_option("--tasks", p_tasks);
  predict->add_option("--participants", p_participants);
  predict->add_option("--cache-dir", p_cache);
  predict->add_option("--out", p_out, "predictions JSONL (default: stdout)");

  // evaluate
  auto* evaluate_cmd = app.add_subcommand("evaluate", "leave-one-participant-out evaluation");
  fs::path e_manifest, e_out;
  std::optional<fs::path> e_cache, e_windows, e_from;
  std::string e_mode = "interaction", e_condition = "home_only", e_source = "forest", e_model, e_tie = "manipulation_wins";
  std::uint64_t e_seed = 0;
  bool e_no_cache = false;
  FeatureFlags e_features;
  ForestFlags e_forest;
  evaluate_cmd->add_option("--manifest", e_manifest);
  evaluate_cmd->add_option("--mode", e_mode)->check(CLI::IsMember({"interaction", "role"}));
  evaluate_cmd->add_option("--condition", e_condition)->check(CLI::IsMember({"home_only", "both_datasets", "all"}));
  evaluate_cmd->add_option("--source", e_source)
      ->check(CLI::IsMember({"forest", "external_windows", "external_contacts"}));
  evaluate_cmd->add_option("--windows", e_windows, "window predictions JSONL for external_windows");
  evaluate_cmd->add_option("--tie-rule", e_tie)->check(CLI::IsMember({"manipulation_wins", "stabilization_wins"}));
  evaluate_cmd->add_option("--model-name", e_model, "label used in report rows");
  evaluate_cmd->add_option("--seed", e_seed);
  evaluate_cmd->add_option("--out", e_out, "output directory")->required();
  evaluate_cmd->add_option("--cache-dir", e_cache, "feature cache (default: <out>/cache)");
  evaluate_cmd->add_flag("--no-cache", e_no_cache);
  evaluate_cmd->add_option("--from-report", e_from, "rerun the configuration embedded in a report");
  e_features.add(evaluate_cmd);
  e_forest.add(evaluate_cmd);

  // agreement
  auto* agreement = app.add_subcommand("agreement", "inter-rater agreement of two annotation files");
  fs::path a_first, a_second;
  std::string a_mode = "interaction";
  agreement->add_option("first", a_first)->required();
  agreement->add_option("second", a_second)->required();
  agreement->add_option("--mode", a_mode)->check(CLI::IsMember({"interaction", "role"}));

  // compare
  auto* compare_cmd = app.add_subcommand("compare", "paired statistical comparison of evaluation reports");
  std::vector<fs::path> c_reports;
  std::string c_metric = "mcc", c_category = "overall";
  double c_alpha = 0.05;
  bool c_bonferroni = false;
  std::optional<fs::path> c_out;
  compare_cmd->add_option("reports", c_reports, "two or more evaluation_report.json files")->required()->expected(2, -1);
  compare_cmd->add_option("--metric", c_metric)->check(CLI::IsMember({"mcc", "f1", "precision", "recall", "accuracy"}));
  compare_cmd->add_option("--category", c_category)->check(CLI::IsMember({"more_affected", "less_affected", "overall"}));
  compare_cmd->add_option("--alpha", c_alpha)->check(CLI::Range(0.0, 1.0));
  compare_cmd->add_flag("--bonferroni", c_bonferroni, "Bonferroni-correct Wilcoxon post hoc p-values");
  compare_cmd->add_option("--out", c_out);

  // synth
  auto* synth = app.add_subcommand("synth", "write the synthetic test corpus");
  fs::path s_out;
  SynthConfig s_config;
  bool s_no_masks = false;
  synth->add_option("--out", s_out)->required();
  synth->add_option("--participants", s_config.participants)->check(CLI::Range(2, 99));
  synth->add_option("--seed", s_config.seed);
  synth->add_option("--unimanual-frames", s_config.unimanual_frames)->check(CLI::PositiveNumber);
  synth->add_option("--bimanual-frames", s_config.bimanual_frames)->check(CLI::PositiveNumber);
  synth->add_option("--negative-frames", s_config.negative_frames)->check(CLI::PositiveNumber);
  synth->add_option("--homelab-frames", s_config.homelab_frames)->check(CLI::NonNegativeNumber);
  synth->add_flag("--no-masks", s_no_masks);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  if (*validate) return cmd_validate(v_manifest, v_json);

  if (*extract) {
    const Corpus corpus = load_manifest(x_manifest);
    const FeatureCache cache(x_cache);
    ExtractionStats stats;
    const auto store = extract_corpus(corpus, parse_mode(x_mode), x_features.config(), &cache, jobs, &stats);
    std::cout << stats_json(stats).dump(2) << "\n";
    return 0;
  }

  if (*train) {
    const Corpus corpus = load_manifest(t_manifest);
    const Mode mode = parse_mode(t_mode);
    const FeatureConfig features = t_features.config();
    const auto ids = select_tasks(corpus, t_tasks, t_participants, t_exclude);
    const auto cache = make_cache(t_cache);
    FeatureStore store;
    ExtractionStats stats;
    for (const auto& id : ids)
      store.emplace(id, extract_task_cached(corpus, corpus.task(id), mode, features, cache ? &*cache : nullptr, &stats));
    const TrainingSet ts = training_set(store, ids, mode);
    if (ts.rows() == 0) fail("no training instances in the selected tasks");
    ForestConfig fc = t_forest.config();
    fc.seed = t_seed;
    fc.jobs = jobs;
    const Forest forest = train_forest(ts, fc, layout_for(mode, features).hash());
    ordered_json bundle;
    bundle["format"] = "handuse-model";
    bundle["version"] = 1;
    bundle["mode"] = to_string(mode);
    bundle["features"] = ordered_json::parse(feature_config_json(features));
    bundle["tasks"] = ids;
    bundle["forest"] = ordered_json::parse(forest.to_json());
    write_file_atomic(t_out, bundle.dump() + "\n");
    std::cout << "trained " << fc.n_trees << " trees on " << ts.rows() << " instances -> " << t_out.string() << "\n";
    if (forest.degenerate_class())
      std::cerr << "warning: training set holds a single class; the forest predicts a constant\n";
    return 0;
  }

  if (*predict) {
    const Corpus corpus = load_manifest(p_manifest);
    const auto bundle = nlohmann::json::parse(read_file(p_model));
    if (bundle.value("format", "") != "handuse-model") fail(p_model.string() + ": not a model file");
    const Mode mode = parse_mode(bundle.at("mode").get<std::string>());
    const FeatureConfig features = feature_config_from_json(bundle.at("features").dump());
    const Forest forest = Forest::from_json(bundle.at("forest").dump());
    const auto cache = make_cache(p_cache);
    std::string out;
    for (const auto& id : select_tasks(corpus, p_tasks, p_participants, "")) {
      FoldResult scored;
      for (const auto& e : extract_task_cached(corpus, corpus.task(id), mode, features, cache ? &*cache : nullptr)) {
        const auto target = instance_target(e.instance, mode);
        scored.predictions.push_back(ScoredPrediction{predict_instance(forest, e), target.value_or(false), e.instance.category});
      }
      out += predictions_jsonl(scored);
    }
    if (p_out.empty()) std::cout << out;
    else write_file_atomic(p_out, out);
    return 0;
  }

  if (*evaluate_cmd) {
    RunConfig base;
    if (e_from) {
      const auto report = load_report(*e_from);
      base = RunConfig::from_json(report.config_json);
      if (base.hash() != report.config_hash) fail(e_from->string() + ": embedded config does not match its hash");
    } else {
      if (e_manifest.empty()) fail("evaluate needs --manifest or --from-report");
      base.manifest = fs::absolute(e_manifest).lexically_normal();
      base.mode = parse_mode(e_mode);
      base.source = parse_model_source(e_source);
      base.model_name = e_model.empty() ? e_source : e_model;
      base.seed = e_seed;
      base.features = e_features.config();
      base.forest = e_forest.config();
      if (e_windows) base.windows = fs::absolute(*e_windows).lexically_normal();
      base.tie_rule = e_tie == "manipulation_wins" ? RoleTieRule::manipulation_wins : RoleTieRule::stabilization_wins;
    }
    base.jobs = jobs;
    base.use_cache = !e_no_cache;
    base.cache_dir = e_cache;

    std::vector<Condition> conditions;
    if (e_from) conditions = {base.condition};
    else if (e_condition == "all") conditions = {Condition::home_only, Condition::both_datasets};
    else conditions = {parse_condition(e_condition)};

    const Corpus corpus = load_manifest(base.manifest);
    for (Condition c : conditions) {
      RunConfig cfg = base;
      cfg.condition = c;
      cfg.output_dir = conditions.size() > 1 ? e_out / std::string(to_string(c)) : e_out;
      if (!cfg.cache_dir && cfg.use_cache) cfg.cache_dir = e_out / "cache";
      ExtractionStats stats;
      const auto report = evaluate(corpus, cfg, &stats);
      write_outputs(report, cfg.output_dir);
      print_summary(report, cfg.output_dir);
      if (cfg.source == ModelSource::forest)
        std::cout << "  features: " << stats.tasks_computed << " tasks computed, " << stats.tasks_reused << " reused\n";
    }
    return 0;
  }

  if (*agreement) {
    const auto s = agreement_summary(load_keyed_annotations(a_first), load_keyed_annotations(a_second), parse_mode(a_mode));
    std::cout << agreement_json(s);
    return 0;
  }

  if (*compare_cmd) {
    std::vector<EvaluationReport> reports;
    for (const auto& p : c_reports) reports.push_back(load_report(p));
    ComparisonOptions opts;
    opts.alpha = c_alpha;
    opts.bonferroni = c_bonferroni;
    const auto rep = compare(reports, c_metric, parse_report_category(c_category), opts);
    auto doc = ordered_json::parse(rep.to_json());
    ordered_json out;
    out["metric"] = c_metric;
    out["category"] = c_category;
    for (auto& [k, v] : doc.items()) out[k] = v;
    const std::string text = out.dump(2) + "\n";
    if (c_out) write_file_atomic(*c_out, text);
    std::cout << text;
    return 0;
  }

  if (*synth) {
    s_config.write_masks = !s_no_masks;
    s_config.jobs = jobs;
    const auto manifest = write_synthetic_corpus(s_out, s_config);
    std::cout << manifest.string() << "\n";
    return 0;
  }
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.kind() == ErrorKind::io ? 2 : 1;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error: malformed JSON: " << e.what() << "\n";
    return 1;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
