#include "handuse/report.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <tuple>
#include <sstream>

#include "handuse/hash.hpp"
#include "json.hpp"

namespace handuse {
namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

namespace {

ordered_json features_to(const FeatureConfig& c) {
  ordered_json j;
  j["hsv_bins"] = c.hsv_bins;
  j["mag_bins"] = c.mag_bins;
  j["mag_range"] = c.mag_range;
  j["dir_bins"] = c.dir_bins;
  j["min_direction_magnitude"] = c.min_direction_magnitude;
  j["background_dilation"] = c.background_dilation;
  j["size_change_frames"] = c.size_change_frames;
  j["hog"] = {{"window", c.hog.window}, {"cell", c.hog.cell}, {"block", c.hog.block}, {"bins", c.hog.bins},
              {"clip", c.hog.clip}};
  j["flow"] = {{"pyr_scale", c.flow.pyr_scale}, {"levels", c.flow.levels},      {"window", c.flow.window},
               {"iterations", c.flow.iterations}, {"poly_n", c.flow.poly_n}, {"poly_sigma", c.flow.poly_sigma}};
  const auto& b = c.masks.band;
  j["masks"] = {{"band",
                 {{"hue_min", b.hue_min},
                  {"hue_max", b.hue_max},
                  {"sat_min", b.sat_min},
                  {"sat_max", b.sat_max},
                  {"val_min", b.val_min},
                  {"val_max", b.val_max}}},
                {"use_files", c.masks.use_files},
                {"flip_fraction", c.masks.flip_fraction},
                {"flip_seed", c.masks.flip_seed}};
  return j;
}

template <typename T>
void read_opt(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

FeatureConfig features_from(const json& j) {
  FeatureConfig c;
  read_opt(j, "hsv_bins", c.hsv_bins);
  read_opt(j, "mag_bins", c.mag_bins);
  read_opt(j, "mag_range", c.mag_range);
  read_opt(j, "dir_bins", c.dir_bins);
  read_opt(j, "min_direction_magnitude", c.min_direction_magnitude);
  read_opt(j, "background_dilation", c.background_dilation);
  read_opt(j, "size_change_frames", c.size_change_frames);
  if (j.contains("hog")) {
    const auto& h = j.at("hog");
    read_opt(h, "window", c.hog.window);
    read_opt(h, "cell", c.hog.cell);
    read_opt(h, "block", c.hog.block);
    read_opt(h, "bins", c.hog.bins);
    read_opt(h, "clip", c.hog.clip);
  }
  if (j.contains("flow")) {
    const auto& f = j.at("flow");
    read_opt(f, "pyr_scale", c.flow.pyr_scale);
    read_opt(f, "levels", c.flow.levels);
    read_opt(f, "window", c.flow.window);
    read_opt(f, "iterations", c.flow.iterations);
    read_opt(f, "poly_n", c.flow.poly_n);
    read_opt(f, "poly_sigma", c.flow.poly_sigma);
  }
  if (j.contains("masks")) {
    const auto& m = j.at("masks");
    if (m.contains("band")) {
      const auto& b = m.at("band");
      read_opt(b, "hue_min", c.masks.band.hue_min);
      read_opt(b, "hue_max", c.masks.band.hue_max);
      read_opt(b, "sat_min", c.masks.band.sat_min);
      read_opt(b, "sat_max", c.masks.band.sat_max);
      read_opt(b, "val_min", c.masks.band.val_min);
      read_opt(b, "val_max", c.masks.band.val_max);
    }
    read_opt(m, "use_files", c.masks.use_files);
    read_opt(m, "flip_fraction", c.masks.flip_fraction);
    read_opt(m, "flip_seed", c.masks.flip_seed);
  }
  return c;
}

std::string_view to_string(WeightedClass w) {
  switch (w) {
    case WeightedClass::minority: return "minority";
    case WeightedClass::positive: return "positive";
    case WeightedClass::negative: return "negative";
  }
  return "?";
}

WeightedClass parse_weighted_class(std::string_view s) {
  if (s == "minority") return WeightedClass::minority;
  if (s == "positive") return WeightedClass::positive;
  if (s == "negative") return WeightedClass::negative;
  fail("unknown weighted class '" + std::string(s) + "'");
}

ordered_json forest_to(const ForestConfig& c) {
  ordered_json j;
  j["n_trees"] = c.n_trees;
  j["max_features"] = c.max_features;
  j["min_leaf"] = c.min_leaf;
  j["max_depth"] = c.max_depth ? ordered_json(*c.max_depth) : ordered_json(nullptr);
  j["class_weight_ratio"] = c.class_weight_ratio;
  j["weighted_class"] = to_string(c.weighted_class);
  return j;
}

ForestConfig forest_from(const json& j) {
  ForestConfig c;
  read_opt(j, "n_trees", c.n_trees);
  read_opt(j, "max_features", c.max_features);
  read_opt(j, "min_leaf", c.min_leaf);
  if (j.contains("max_depth") && !j.at("max_depth").is_null()) c.max_depth = j.at("max_depth").get<int>();
  read_opt(j, "class_weight_ratio", c.class_weight_ratio);
  if (j.contains("weighted_class")) c.weighted_class = parse_weighted_class(j.at("weighted_class").get<std::string>());
  c.validate();
  return c;
}

ordered_json run_config_to(const RunConfig& c) {
  ordered_json j;
  j["manifest"] = c.manifest.generic_string();
  j["mode"] = to_string(c.mode);
  j["condition"] = to_string(c.condition);
  j["source"] = to_string(c.source);
  j["model_name"] = c.model_name;
  j["seed"] = c.seed;
  j["features"] = features_to(c.features);
  j["forest"] = forest_to(c.forest);
  j["windows"] = c.windows ? ordered_json(c.windows->generic_string()) : ordered_json(nullptr);
  j["tie_rule"] = c.tie_rule == RoleTieRule::manipulation_wins ? "manipulation_wins" : "stabilization_wins";
  return j;
}

ordered_json metrics_to(const MetricSet& m) {
  ordered_json j;
  j["mcc"] = m.mcc;
  j["f1"] = m.f1;
  j["precision"] = m.precision;
  j["recall"] = m.recall;
  j["accuracy"] = m.accuracy;
  j["mcc_undefined"] = m.mcc_undefined;
  return j;
}

ordered_json confusion_to(const ConfusionCounts& c) {
  return ordered_json{{"tp", c.tp}, {"fp", c.fp}, {"fn", c.fn}, {"tn", c.tn}};
}

ConfusionCounts confusion_from(const json& j) {
  ConfusionCounts c;
  c.tp = j.at("tp").get<std::uint64_t>();
  c.fp = j.at("fp").get<std::uint64_t>();
  c.fn = j.at("fn").get<std::uint64_t>();
  c.tn = j.at("tn").get<std::uint64_t>();
  return c;
}

constexpr ReportCategory kCategories[] = {ReportCategory::more_affected, ReportCategory::less_affected,
                                          ReportCategory::overall};

std::string fixed(double v) {
  if (!std::isfinite(v)) return "";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

}  // namespace

std::string feature_config_json(const FeatureConfig& config) { return features_to(config).dump(); }

FeatureConfig feature_config_from_json(std::string_view text) {
  try {
    return features_from(json::parse(text));
  } catch (const json::exception& e) {
    fail(std::string("malformed feature config: ") + e.what());
  }
}

std::string forest_config_json(const ForestConfig& config) { return forest_to(config).dump(); }

ForestConfig forest_config_from_json(std::string_view text) {
  try {
    return forest_from(json::parse(text));
  } catch (const json::exception& e) {
    fail(std::string("malformed forest config: ") + e.what());
  }
}

std::string RunConfig::to_json() const { return run_config_to(*this).dump(); }

std::uint64_t RunConfig::hash() const { return Fnv1a().add("run/v1").add(to_json()).value(); }

RunConfig RunConfig::from_json(std::string_view text) {
  try {
    const json j = json::parse(text);
    static const std::set<std::string> known = {"manifest", "mode",    "condition", "source",  "model_name",
                                                "seed",     "features", "forest",   "windows", "tie_rule"};
    for (const auto& [key, value] : j.items())
      if (!known.contains(key)) fail("unknown run config field '" + key + "'");
    RunConfig c;
    c.manifest = j.at("manifest").get<std::string>();
    if (j.contains("mode")) c.mode = parse_mode(j.at("mode").get<std::string>());
    if (j.contains("condition")) c.condition = parse_condition(j.at("condition").get<std::string>());
    if (j.contains("source")) c.source = parse_model_source(j.at("source").get<std::string>());
    read_opt(j, "model_name", c.model_name);
    read_opt(j, "seed", c.seed);
    if (j.contains("features")) c.features = features_from(j.at("features"));
    if (j.contains("forest")) c.forest = forest_from(j.at("forest"));
    if (j.contains("windows") && !j.at("windows").is_null()) c.windows = j.at("windows").get<std::string>();
    if (j.contains("tie_rule")) {
      const auto t = j.at("tie_rule").get<std::string>();
      if (t == "manipulation_wins") c.tie_rule = RoleTieRule::manipulation_wins;
      else if (t == "stabilization_wins") c.tie_rule = RoleTieRule::stabilization_wins;
      else fail("unknown tie rule '" + t + "'");
    }
    return c;
  } catch (const json::exception& e) {
    fail(std::string("malformed run config: ") + e.what());
  }
}

std::string report_json(const EvaluationReport& r) {
  ordered_json j;
  j["format"] = "handuse-evaluation";
  j["version"] = 1;
  j["config"] = ordered_json::parse(r.config_json);
  j["config_hash"] = to_hex(r.config_hash);
  j["model"] = r.model_name;
  j["mode"] = to_string(r.mode);
  j["condition"] = to_string(r.condition);
  j["source"] = to_string(r.source);
  j["features"] = {{"vectors", r.feature_vectors}, {"empty_masks", r.empty_masks}, {"empty_regions", r.empty_regions}};

  auto& folds = j["folds"] = ordered_json::array();
  for (const auto& f : r.folds) {
    ordered_json fj;
    fj["participant"] = f.spec.test_participant;
    fj["train_tasks"] = f.spec.train_tasks;
    fj["validation_tasks"] = f.spec.validation_tasks;
    fj["test_tasks"] = f.spec.test_tasks;
    fj["train_instances"] = f.train_instances;
    fj["train_positive"] = f.train_positive;
    fj["test_instances"] = f.test_instances;
    fj["missing_boxes"] = f.missing_boxes;
    fj["skipped_unlabelled"] = f.skipped_unlabelled;
    fj["degenerate_class"] = f.degenerate_class ? ordered_json(*f.degenerate_class) : ordered_json(nullptr);
    fj["warnings"] = f.warnings;
    auto& cats = fj["categories"];
    for (auto c : kCategories) {
      const auto& cm = f.confusion[static_cast<std::size_t>(c)];
      ordered_json cj;
      cj["confusion"] = confusion_to(cm);
      cj["metrics"] = cm.total() > 0 ? metrics_to(metric_set(cm)) : ordered_json(nullptr);
      cats[std::string(to_string(c))] = std::move(cj);
    }
    folds.push_back(std::move(fj));
  }

  auto& summary = j["summary"];
  for (auto c : kCategories) {
    const auto& s = r.summary[static_cast<std::size_t>(c)];
    ordered_json sj;
    sj["folds"] = s.folds_used;
    if (s.folds_used > 0) {
      sj["macro"] = {{"mean", metrics_to(s.macro.mean)}, {"sd", metrics_to(s.macro.sd)}, {"sd_undefined", s.macro.sd_undefined}};
      sj["micro"] = metrics_to(s.micro);
      sj["pooled"] = confusion_to(s.pooled);
    } else {
      sj["macro"] = nullptr;
      sj["micro"] = nullptr;
      sj["pooled"] = confusion_to(s.pooled);
    }
    summary[std::string(to_string(c))] = std::move(sj);
  }
  return j.dump(2) + "\n";
}

EvaluationReport parse_report_json(std::string_view text, const std::string& source) {
  try {
    const ordered_json j = ordered_json::parse(text);
    if (j.at("format").get<std::string>() != "handuse-evaluation") fail(source + ": not an evaluation report");
    if (j.at("version").get<int>() != 1) fail(source + ": unsupported report version");
    EvaluationReport r;
    r.config_json = j.at("config").dump();
    r.config_hash = from_hex(j.at("config_hash").get<std::string>());
    r.model_name = j.at("model").get<std::string>();
    r.mode = parse_mode(j.at("mode").get<std::string>());
    r.condition = parse_condition(j.at("condition").get<std::string>());
    r.source = parse_model_source(j.at("source").get<std::string>());
    const auto& feat = j.at("features");
    r.feature_vectors = feat.at("vectors").get<std::size_t>();
    r.empty_masks = feat.at("empty_masks").get<std::size_t>();
    r.empty_regions = feat.at("empty_regions").get<std::size_t>();
    for (const auto& fj : j.at("folds")) {
      FoldResult f;
      f.spec.test_participant = fj.at("participant").get<std::string>();
      f.spec.condition = r.condition;
      f.spec.mode = r.mode;
      f.spec.train_tasks = fj.at("train_tasks").get<std::vector<std::string>>();
      f.spec.validation_tasks = fj.at("validation_tasks").get<std::vector<std::string>>();
      f.spec.test_tasks = fj.at("test_tasks").get<std::vector<std::string>>();
      f.train_instances = fj.at("train_instances").get<std::size_t>();
      f.train_positive = fj.at("train_positive").get<std::size_t>();
      f.test_instances = fj.at("test_instances").get<std::size_t>();
      f.missing_boxes = fj.at("missing_boxes").get<std::size_t>();
      f.skipped_unlabelled = fj.at("skipped_unlabelled").get<std::size_t>();
      if (!fj.at("degenerate_class").is_null()) f.degenerate_class = fj.at("degenerate_class").get<bool>();
      f.warnings = fj.at("warnings").get<std::vector<std::string>>();
      for (auto c : kCategories)
        f.confusion[static_cast<std::size_t>(c)] =
            confusion_from(fj.at("categories").at(std::string(to_string(c))).at("confusion"));
      const auto& cm = f.confusion;
      if (cm[0] + cm[1] != cm[2]) fail(source + ": fold " + f.spec.test_participant + " overall != sum of hands");
      r.folds.push_back(std::move(f));
    }
    summarize(r);
    return r;
  } catch (const nlohmann::json::exception& e) {
    fail(source + ": malformed evaluation report: " + e.what());
  }
}

EvaluationReport load_report(const fs::path& path) { return parse_report_json(read_file(path), path.string()); }

std::string report_csv(const EvaluationReport& r) {
  std::string out = "model,condition,hand_category,average_type,M,M_sd,F,F_sd,P,P_sd,R,R_sd,A,A_sd\n";
  for (auto c : kCategories) {
    const auto& s = r.summary[static_cast<std::size_t>(c)];
    const auto prefix = r.model_name + "," + std::string(to_string(r.condition)) + "," + std::string(to_string(c)) + ",";
    const double nan = std::numeric_limits<double>::quiet_NaN();
    const bool have = s.folds_used > 0;
    const MetricSet& mean = s.macro.mean;
    const MetricSet& sd = s.macro.sd;
    auto cell = [&](double v) { return have ? fixed(v) : fixed(nan); };
    out += prefix + "macro," + cell(mean.mcc) + "," + cell(sd.mcc) + "," + cell(mean.f1) + "," + cell(sd.f1) + "," +
           cell(mean.precision) + "," + cell(sd.precision) + "," + cell(mean.recall) + "," + cell(sd.recall) + "," +
           cell(mean.accuracy) + "," + cell(sd.accuracy) + "\n";
    const MetricSet& mi = s.micro;
    out += prefix + "micro," + cell(mi.mcc) + ",," + cell(mi.f1) + ",," + cell(mi.precision) + ",," + cell(mi.recall) +
           ",," + cell(mi.accuracy) + ",\n";
  }
  return out;
}

std::string predictions_jsonl(const FoldResult& fold) {
  std::string out;
  for (const auto& sp : fold.predictions) {
    const auto& p = sp.prediction;
    ordered_json j;
    j["task"] = p.task_id;
    j["frame"] = p.frame_index;
    j["side"] = to_string(p.side);
    j["category"] = to_string(sp.category);
    j["truth"] = sp.truth;
    j["probability"] = p.probability ? ordered_json(*p.probability) : ordered_json(nullptr);
    j["decision"] = p.decision;
    j["source"] = to_string(p.source);
    out += j.dump();
    out += '\n';
  }
  return out;
}

void write_file_atomic(const fs::path& path, std::string_view text) {
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
    if (ec) fail_io("cannot create directory '" + path.parent_path().string() + "': " + ec.message());
  }
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail_io("cannot write '" + tmp.string() + "'");
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!out) fail_io("failed writing '" + tmp.string() + "'");
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) fail_io("cannot rename into '" + path.string() + "': " + ec.message());
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail_io("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<KeyedLabel> parse_keyed_annotations(std::string_view text, const std::string& source) {
  const std::size_t eol = text.find('\n');
  const std::string_view header = text.substr(0, eol);
  std::vector<KeyedLabel> out;
  if (header.substr(0, 5) != "task,") {
    for (auto& l : parse_annotations(text, source)) out.push_back(KeyedLabel{"", l});
    return out;
  }
  // Regroup rows per task and reuse the plain parser for each group.
  std::map<std::string, std::string> groups;
  std::size_t pos = eol == std::string_view::npos ? text.size() : eol + 1;
  std::size_t line_no = 1;
  while (pos < text.size()) {
    const std::size_t nl = std::min(text.find('\n', pos), text.size());
    std::string_view line = text.substr(pos, nl - pos);
    pos = nl + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;
    const std::size_t comma = line.find(',');
    if (comma == std::string_view::npos || comma == 0)
      fail(source + ":" + std::to_string(line_no) + ": missing task column");
    auto& g = groups[std::string(line.substr(0, comma))];
    if (g.empty()) g = "frame,side,interaction,role\n";
    g.append(line.substr(comma + 1));
    g += '\n';
  }
  for (const auto& [task, body] : groups)
    for (auto& l : parse_annotations(body, source + " (task " + task + ")")) out.push_back(KeyedLabel{task, l});
  return out;
}

std::vector<KeyedLabel> load_keyed_annotations(const fs::path& path) {
  return parse_keyed_annotations(read_file(path), path.string());
}

AgreementSummary agreement_summary(const std::vector<KeyedLabel>& a, const std::vector<KeyedLabel>& b, Mode mode) {
  using Key = std::tuple<std::string, int, Side>;
  std::map<Key, FrameLabel> rb;
  for (const auto& k : b) rb[{k.task, k.label.frame_index, k.label.side}] = k.label;
  AgreementSummary s;
  s.mode = mode;
  std::set<Key> matched;
  for (const auto& k : a) {
    const Key key{k.task, k.label.frame_index, k.label.side};
    const auto it = rb.find(key);
    if (it == rb.end()) {
      ++s.only_a;
      continue;
    }
    matched.insert(key);
    const FrameLabel& la = k.label;
    const FrameLabel& lb = it->second;
    if (mode == Mode::interaction) {
      s.table.add(la.interaction ? 1 : 0, lb.interaction ? 1 : 0);
    } else {
      if (la.role == Role::none || lb.role == Role::none) continue;
      s.table.add(la.role == Role::manipulator ? 1 : 0, lb.role == Role::manipulator ? 1 : 0);
    }
  }
  s.only_b = rb.size() - matched.size();
  s.observations = s.table.total();
  if (s.observations == 0) fail("agreement: the two annotation files share no observations");
  s.kappa = cohens_kappa_detail(s.table);
  s.pabak = pabak(s.table);
  s.band = interpret_kappa(s.kappa.kappa);
  return s;
}

std::string agreement_json(const AgreementSummary& s) {
  ordered_json j;
  j["mode"] = to_string(s.mode);
  j["observations"] = s.observations;
  j["kappa"] = s.kappa.kappa;
  j["pabak"] = s.pabak;
  j["band"] = s.band;
  j["observed_agreement"] = s.kappa.observed;
  j["expected_agreement"] = s.kappa.expected;
  j["degenerate"] = s.kappa.degenerate;
  j["only_in_a"] = s.only_a;
  j["only_in_b"] = s.only_b;
  j["table"] = {{s.table.at(0, 0), s.table.at(0, 1)}, {s.table.at(1, 0), s.table.at(1, 1)}};
  return j.dump(2) + "\n";
}

void write_outputs(const EvaluationReport& report, const fs::path& dir) {
  write_file_atomic(dir / "evaluation_report.json", report_json(report));
  write_file_atomic(dir / "report.csv", report_csv(report));
  for (const auto& f : report.folds)
    write_file_atomic(dir / "predictions" / (f.spec.test_participant + ".jsonl"), predictions_jsonl(f));
}

}  // namespace handuse
