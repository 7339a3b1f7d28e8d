#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace handuse {

/// Which class receives `class_weight_ratio` as its sample weight.
enum class WeightedClass : std::uint8_t { minority, positive, negative };

struct ForestConfig {
  int n_trees = 150;
  /// Features examined per split; 0 means ceil(sqrt(d)).
  int max_features = 0;
  int min_leaf = 1;
  std::optional<int> max_depth;
  double class_weight_ratio = 1.0;
  WeightedClass weighted_class = WeightedClass::minority;
  std::uint64_t seed = 0;
  unsigned jobs = 1;  // training threads; does not affect the result

  void validate() const;
  /// Fingerprint of everything that affects the trained trees (not `jobs`).
  std::uint64_t hash() const;
  friend bool operator==(const ForestConfig&, const ForestConfig&) = default;
};

/// Dense row-major sample matrix with labels and stable ordering keys.
struct TrainingSet {
  std::size_t dims = 0;
  std::vector<double> values;  // rows * dims
  std::vector<bool> labels;
  /// Bootstrap draws index samples in ascending key order, so the trained
  /// forest does not depend on the order rows were appended. Keys must be unique.
  std::vector<std::uint64_t> keys;

  std::size_t rows() const noexcept { return labels.size(); }
  std::span<const double> row(std::size_t i) const { return {values.data() + i * dims, dims}; }
  void add(std::span<const double> x, bool label, std::uint64_t key);
};

struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0.0;  // go left when x[feature] <= threshold
  int left = -1;
  int right = -1;
  double weight_negative = 0.0;  // weighted class tallies of training samples reaching the node
  double weight_positive = 0.0;
  friend bool operator==(const TreeNode&, const TreeNode&) = default;
};

struct Tree {
  std::vector<TreeNode> nodes;  // nodes[0] is the root
  double predict(std::span<const double> x) const;
  friend bool operator==(const Tree&, const Tree&) = default;
};

class Forest {
 public:
  Forest() = default;
  Forest(ForestConfig config, std::uint64_t layout_hash, std::size_t dims, std::vector<Tree> trees,
         std::optional<bool> degenerate_class = std::nullopt);

  /// Mean over trees of the leaf's weighted positive fraction. Throws when
  /// `layout_hash` differs from the one the forest was trained with.
  double predict_proba(std::span<const double> x, std::uint64_t layout_hash) const;

  const ForestConfig& config() const noexcept { return config_; }
  std::uint64_t layout_hash() const noexcept { return layout_hash_; }
  std::size_t dims() const noexcept { return dims_; }
  const std::vector<Tree>& trees() const noexcept { return trees_; }
  /// Set when every training label was the same class.
  std::optional<bool> degenerate_class() const noexcept { return degenerate_; }

  std::string to_json() const;
  static Forest from_json(std::string_view text);

  friend bool operator==(const Forest&, const Forest&) = default;

 private:
  ForestConfig config_;
  std::uint64_t layout_hash_ = 0;
  std::size_t dims_ = 0;
  std::vector<Tree> trees_;
  std::optional<bool> degenerate_;
};

/// Bootstrap-aggregated CART trees with weighted Gini splits.
Forest train_forest(const TrainingSet& data, const ForestConfig& config, std::uint64_t layout_hash = 0);

/// Grow one tree on explicit per-sample multiplicities (bootstrap counts).
/// Exposed for tests; train_forest draws the counts.
Tree grow_tree(const TrainingSet& data, std::span<const double> sample_weights, std::span<const std::uint32_t> counts,
               const ForestConfig& config, std::uint64_t tree_seed);

}  // namespace handuse
