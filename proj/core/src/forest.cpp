#include "handuse/forest.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "handuse/hash.hpp"
#include "handuse/parallel.hpp"
#include "handuse/rng.hpp"
#include "handuse/types.hpp"
#include "json.hpp"

namespace handuse {
using nlohmann::json;
using nlohmann::ordered_json;

void ForestConfig::validate() const {
  if (n_trees < 1) fail("forest: n_trees must be >= 1");
  if (max_features < 0) fail("forest: max_features must be >= 0");
  if (min_leaf < 1) fail("forest: min_leaf must be >= 1");
  if (max_depth && *max_depth < 0) fail("forest: max_depth must be >= 0");
  if (!(class_weight_ratio >= 1.0) || !std::isfinite(class_weight_ratio)) fail("forest: class_weight_ratio must be >= 1");
}

std::uint64_t ForestConfig::hash() const {
  return Fnv1a()
      .add("forest/v1")
      .add(static_cast<std::uint64_t>(n_trees))
      .add(static_cast<std::uint64_t>(max_features))
      .add(static_cast<std::uint64_t>(min_leaf))
      .add(static_cast<std::uint64_t>(max_depth.value_or(-1)))
      .add(class_weight_ratio)
      .add(static_cast<std::uint64_t>(weighted_class))
      .add(seed)
      .value();
}

void TrainingSet::add(std::span<const double> x, bool label, std::uint64_t key) {
  if (dims == 0 && labels.empty()) dims = x.size();
  if (x.size() != dims) fail("training set: row has " + std::to_string(x.size()) + " features, expected " + std::to_string(dims));
  values.insert(values.end(), x.begin(), x.end());
  labels.push_back(label);
  keys.push_back(key);
}

double Tree::predict(std::span<const double> x) const {
  int i = 0;
  while (nodes[static_cast<std::size_t>(i)].feature >= 0) {
    const TreeNode& n = nodes[static_cast<std::size_t>(i)];
    i = x[static_cast<std::size_t>(n.feature)] <= n.threshold ? n.left : n.right;
  }
  const TreeNode& leaf = nodes[static_cast<std::size_t>(i)];
  const double total = leaf.weight_positive + leaf.weight_negative;
  return total > 0 ? leaf.weight_positive / total : 0.0;
}

namespace {

struct SplitCandidate {
  int feature = -1;
  double threshold = 0.0;
  double proxy = -1.0;  // sum over children of (w_pos^2 + w_neg^2) / w
  std::size_t left_size = 0;

  bool better_than(const SplitCandidate& o) const {
    if (o.feature < 0) return true;
    if (proxy != o.proxy) return proxy > o.proxy;
    if (feature != o.feature) return feature < o.feature;
    return threshold < o.threshold;
  }
};

struct Entry {
  double value;
  std::uint32_t sample;
};

class TreeGrower {
 public:
  TreeGrower(const TrainingSet& data, std::span<const double> sample_weights, std::span<const std::uint32_t> counts,
             const ForestConfig& config, std::uint64_t seed)
      : data_(data), weights_(sample_weights), counts_(counts), config_(config), rng_(seed) {
    const std::size_t d = data.dims;
    mtry_ = config.max_features > 0 ? std::min<std::size_t>(static_cast<std::size_t>(config.max_features), d)
                                     : static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(d))));
    mtry_ = std::max<std::size_t>(1, mtry_);
    features_.resize(d);
    std::iota(features_.begin(), features_.end(), 0);
    for (std::uint32_t i = 0; i < data.rows(); ++i)
      if (counts[i] > 0) samples_.push_back(i);
  }

  Tree grow() {
    Tree tree;
    struct Pending {
      int node;
      std::size_t begin, end;
      int depth;
    };
    tree.nodes.emplace_back();
    std::vector<Pending> stack{{0, 0, samples_.size(), 0}};
    while (!stack.empty()) {
      const Pending p = stack.back();
      stack.pop_back();
      double wp = 0, wn = 0;
      std::size_t multiplicity = 0;
      for (std::size_t k = p.begin; k < p.end; ++k) {
        const std::uint32_t s = samples_[k];
        const double w = counts_[s] * weights_[s];
        (data_.labels[s] ? wp : wn) += w;
        multiplicity += counts_[s];
      }
      TreeNode& node = tree.nodes[static_cast<std::size_t>(p.node)];
      node.weight_positive = wp;
      node.weight_negative = wn;

      const bool pure = wp == 0 || wn == 0;
      const bool too_small = multiplicity < 2 * static_cast<std::size_t>(config_.min_leaf);
      const bool too_deep = config_.max_depth && p.depth >= *config_.max_depth;
      if (pure || too_small || too_deep) continue;

      const SplitCandidate best = find_split(p.begin, p.end);
      if (best.feature < 0) continue;

      // Partition samples_[begin, end) so that the left child comes first, order preserved.
      std::stable_partition(samples_.begin() + static_cast<std::ptrdiff_t>(p.begin),
                            samples_.begin() + static_cast<std::ptrdiff_t>(p.end), [&](std::uint32_t s) {
                              return value(s, best.feature) <= best.threshold;
                            });
      const std::size_t mid = p.begin + best.left_size;
      const int left = static_cast<int>(tree.nodes.size());
      tree.nodes.emplace_back();
      tree.nodes.emplace_back();
      TreeNode& parent = tree.nodes[static_cast<std::size_t>(p.node)];
      parent.feature = best.feature;
      parent.threshold = best.threshold;
      parent.left = left;
      parent.right = left + 1;
      // Right pushed first so the left subtree is grown (and numbered) first.
      stack.push_back({left + 1, mid, p.end, p.depth + 1});
      stack.push_back({left, p.begin, mid, p.depth + 1});
    }
    return tree;
  }

 private:
  double value(std::uint32_t s, int f) const { return data_.values[static_cast<std::size_t>(s) * data_.dims + static_cast<std::size_t>(f)]; }

  SplitCandidate find_split(std::size_t begin, std::size_t end) {
    SplitCandidate best;
    const std::size_t d = features_.size();
    std::size_t informative = 0;
    entries_.resize(end - begin);
    // Draw features without replacement until mtry non-constant ones were examined.
    for (std::size_t j = 0; j < d && informative < mtry_; ++j) {
      std::swap(features_[j], features_[j + rng_.below(d - j)]);
      const int f = features_[j];
      for (std::size_t k = begin; k < end; ++k) entries_[k - begin] = Entry{value(samples_[k], f), samples_[k]};
      std::sort(entries_.begin(), entries_.end(), [](const Entry& a, const Entry& b) {
        return a.value != b.value ? a.value < b.value : a.sample < b.sample;
      });
      if (entries_.front().value == entries_.back().value) continue;
      ++informative;
      scan_feature(f, best);
    }
    return best;
  }

  void scan_feature(int f, SplitCandidate& best) const {
    double total_p = 0, total_n = 0;
    std::size_t total_m = 0;
    for (const Entry& e : entries_) {
      const double w = counts_[e.sample] * weights_[e.sample];
      (data_.labels[e.sample] ? total_p : total_n) += w;
      total_m += counts_[e.sample];
    }
    double lp = 0, ln = 0;
    std::size_t lm = 0;
    const auto min_leaf = static_cast<std::size_t>(config_.min_leaf);
    for (std::size_t i = 0; i + 1 < entries_.size(); ++i) {
      const Entry& e = entries_[i];
      const double w = counts_[e.sample] * weights_[e.sample];
      (data_.labels[e.sample] ? lp : ln) += w;
      lm += counts_[e.sample];
      const double next = entries_[i + 1].value;
      if (e.value == next) continue;
      if (lm < min_leaf || total_m - lm < min_leaf) continue;
      const double rp = total_p - lp;
      const double rn = total_n - ln;
      const double wl = lp + ln;
      const double wr = rp + rn;
      const double proxy = (lp * lp + ln * ln) / wl + (rp * rp + rn * rn) / wr;
      double threshold = e.value + (next - e.value) / 2.0;
      if (!(threshold < next)) threshold = e.value;
      SplitCandidate c{f, threshold, proxy, i + 1};
      if (c.better_than(best)) best = c;
    }
  }

  const TrainingSet& data_;
  std::span<const double> weights_;
  std::span<const std::uint32_t> counts_;
  const ForestConfig& config_;
  Rng rng_;
  std::size_t mtry_ = 1;
  std::vector<int> features_;
  std::vector<std::uint32_t> samples_;
  std::vector<Entry> entries_;
};

std::uint64_t tree_seed(std::uint64_t forest_seed, std::size_t tree_index) {
  return splitmix64(forest_seed ^ splitmix64(0x7472656500000000ULL + tree_index));
}

}  // namespace

Tree grow_tree(const TrainingSet& data, std::span<const double> sample_weights, std::span<const std::uint32_t> counts,
               const ForestConfig& config, std::uint64_t seed) {
  if (sample_weights.size() != data.rows() || counts.size() != data.rows()) fail("grow_tree: weight/count size mismatch");
  return TreeGrower(data, sample_weights, counts, config, seed).grow();
}

Forest::Forest(ForestConfig config, std::uint64_t layout_hash, std::size_t dims, std::vector<Tree> trees,
               std::optional<bool> degenerate_class)
    : config_(config), layout_hash_(layout_hash), dims_(dims), trees_(std::move(trees)), degenerate_(degenerate_class) {}

double Forest::predict_proba(std::span<const double> x, std::uint64_t layout_hash) const {
  if (layout_hash != layout_hash_) fail("forest: feature layout " + to_hex(layout_hash) + " does not match trained layout " + to_hex(layout_hash_));
  if (x.size() != dims_) fail("forest: vector has " + std::to_string(x.size()) + " features, expected " + std::to_string(dims_));
  if (trees_.empty()) fail("forest: no trees");
  double sum = 0;
  for (const auto& t : trees_) sum += t.predict(x);
  return std::clamp(sum / static_cast<double>(trees_.size()), 0.0, 1.0);
}

Forest train_forest(const TrainingSet& data, const ForestConfig& config, std::uint64_t layout_hash) {
  config.validate();
  const std::size_t n = data.rows();
  if (n < 2) fail("forest: need at least 2 training samples");
  if (data.dims == 0) fail("forest: zero-dimensional samples");
  if (data.values.size() != n * data.dims || data.keys.size() != n) fail("forest: inconsistent training set");

  // Reorder rows by key so bootstrap draws are independent of insertion order.
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return data.keys[a] < data.keys[b]; });
  for (std::size_t i = 1; i < n; ++i)
    if (data.keys[order[i]] == data.keys[order[i - 1]]) fail("forest: duplicate sample key");
  TrainingSet sorted;
  sorted.dims = data.dims;
  sorted.values.reserve(data.values.size());
  for (std::size_t i : order) sorted.add(data.row(i), data.labels[i], data.keys[i]);

  const auto positives = static_cast<std::size_t>(std::count(sorted.labels.begin(), sorted.labels.end(), true));
  std::optional<bool> degenerate;
  if (positives == 0) degenerate = false;
  if (positives == n) degenerate = true;

  bool weighted_label = true;
  switch (config.weighted_class) {
    case WeightedClass::positive: weighted_label = true; break;
    case WeightedClass::negative: weighted_label = false; break;
    case WeightedClass::minority: weighted_label = positives <= n - positives; break;
  }
  std::vector<double> weights(n);
  for (std::size_t i = 0; i < n; ++i) weights[i] = sorted.labels[i] == weighted_label ? config.class_weight_ratio : 1.0;

  std::vector<Tree> trees(static_cast<std::size_t>(config.n_trees));
  parallel_for(trees.size(), config.jobs, [&](std::size_t t) {
    const std::uint64_t seed = tree_seed(config.seed, t);
    Rng rng(seed);
    std::vector<std::uint32_t> counts(n, 0);
    for (std::size_t draw = 0; draw < n; ++draw) ++counts[rng.below(n)];
    trees[t] = grow_tree(sorted, weights, counts, config, splitmix64(seed));
  });
  return Forest(config, layout_hash, data.dims, std::move(trees), degenerate);
}

std::string Forest::to_json() const {
  ordered_json doc;
  doc["format"] = "handuse-forest";
  doc["version"] = 1;
  ordered_json cfg;
  cfg["n_trees"] = config_.n_trees;
  cfg["max_features"] = config_.max_features;
  cfg["min_leaf"] = config_.min_leaf;
  cfg["max_depth"] = config_.max_depth ? ordered_json(*config_.max_depth) : ordered_json(nullptr);
  cfg["class_weight_ratio"] = config_.class_weight_ratio;
  cfg["weighted_class"] = config_.weighted_class == WeightedClass::minority   ? "minority"
                          : config_.weighted_class == WeightedClass::positive ? "positive"
                                                                              : "negative";
  cfg["seed"] = config_.seed;
  doc["config"] = std::move(cfg);
  doc["config_hash"] = to_hex(config_.hash());
  doc["layout_hash"] = to_hex(layout_hash_);
  doc["dims"] = dims_;
  doc["degenerate_class"] = degenerate_ ? ordered_json(*degenerate_) : ordered_json(nullptr);
  doc["trees"] = ordered_json::array();
  for (const auto& t : trees_) {
    ordered_json feature = ordered_json::array(), threshold = ordered_json::array(), left = ordered_json::array(),
                 right = ordered_json::array(), wn = ordered_json::array(), wp = ordered_json::array();
    for (const auto& node : t.nodes) {
      feature.push_back(node.feature);
      threshold.push_back(node.threshold);
      left.push_back(node.left);
      right.push_back(node.right);
      wn.push_back(node.weight_negative);
      wp.push_back(node.weight_positive);
    }
    doc["trees"].push_back({{"feature", feature}, {"threshold", threshold}, {"left", left}, {"right", right},
                            {"weight_negative", wn}, {"weight_positive", wp}});
  }
  return doc.dump() + "\n";
}

Forest Forest::from_json(std::string_view text) {
  try {
    const json doc = json::parse(text);
    if (doc.at("format").get<std::string>() != "handuse-forest") fail("not a forest model file");
    if (doc.at("version").get<int>() != 1) fail("unsupported forest model version");
    const json& c = doc.at("config");
    ForestConfig cfg;
    cfg.n_trees = c.at("n_trees").get<int>();
    cfg.max_features = c.at("max_features").get<int>();
    cfg.min_leaf = c.at("min_leaf").get<int>();
    if (!c.at("max_depth").is_null()) cfg.max_depth = c.at("max_depth").get<int>();
    cfg.class_weight_ratio = c.at("class_weight_ratio").get<double>();
    const auto wc = c.at("weighted_class").get<std::string>();
    cfg.weighted_class = wc == "minority" ? WeightedClass::minority : wc == "positive" ? WeightedClass::positive : WeightedClass::negative;
    cfg.seed = c.at("seed").get<std::uint64_t>();
    cfg.validate();

    const std::size_t dims = doc.at("dims").get<std::size_t>();
    std::optional<bool> degenerate;
    if (!doc.at("degenerate_class").is_null()) degenerate = doc.at("degenerate_class").get<bool>();
    std::vector<Tree> trees;
    for (const auto& jt : doc.at("trees")) {
      const auto feature = jt.at("feature").get<std::vector<int>>();
      const auto threshold = jt.at("threshold").get<std::vector<double>>();
      const auto left = jt.at("left").get<std::vector<int>>();
      const auto right = jt.at("right").get<std::vector<int>>();
      const auto wn = jt.at("weight_negative").get<std::vector<double>>();
      const auto wp = jt.at("weight_positive").get<std::vector<double>>();
      const std::size_t m = feature.size();
      if (m == 0 || threshold.size() != m || left.size() != m || right.size() != m || wn.size() != m || wp.size() != m)
        fail("malformed tree arrays");
      Tree t;
      t.nodes.resize(m);
      for (std::size_t i = 0; i < m; ++i) {
        TreeNode& node = t.nodes[i];
        node = TreeNode{feature[i], threshold[i], left[i], right[i], wn[i], wp[i]};
        if (node.feature >= 0) {
          if (static_cast<std::size_t>(node.feature) >= dims) fail("tree node feature index out of range");
          if (node.left <= static_cast<int>(i) || node.right <= static_cast<int>(i) || node.left >= static_cast<int>(m) ||
              node.right >= static_cast<int>(m))
            fail("tree node child index out of range");
        }
      }
      trees.push_back(std::move(t));
    }
    if (trees.size() != static_cast<std::size_t>(cfg.n_trees)) fail("tree count does not match config");
    return Forest(cfg, from_hex(doc.at("layout_hash").get<std::string>()), dims, std::move(trees), degenerate);
  } catch (const json::exception& e) {
    fail(std::string("malformed forest model: ") + e.what());
  }
}

}  // namespace handuse
