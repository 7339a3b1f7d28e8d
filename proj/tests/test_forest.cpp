#include <cmath>
#include <random>
#include <vector>

#include <boost/math/distributions/binomial.hpp>

#include "doctest.h"
#include "handuse/forest.hpp"
#include "handuse/types.hpp"

using namespace handuse;

namespace {

TrainingSet xor_set(std::size_t n, std::uint64_t seed, std::uint64_t key_base = 0) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> jitter(0.0, 0.15);
  TrainingSet ts;
  ts.dims = 2;
  for (std::size_t i = 0; i < n; ++i) {
    const int qx = static_cast<int>(i % 2), qy = static_cast<int>((i / 2) % 2);
    const double x[2] = {qx + jitter(gen), qy + jitter(gen)};
    ts.add(x, qx != qy, key_base + i);
  }
  return ts;
}

/// Overlapping Gaussians, positives are the 5% minority.
TrainingSet imbalanced_set(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> z(0.0, 1.0);
  TrainingSet ts;
  ts.dims = 3;
  for (std::size_t i = 0; i < n; ++i) {
    const bool pos = i % 20 == 0;
    const double shift = pos ? 1.2 : 0.0;
    const double x[3] = {z(gen) + shift, z(gen) + shift, z(gen)};
    ts.add(x, pos, i);
  }
  return ts;
}

double accuracy(const Forest& f, const TrainingSet& ts) {
  std::size_t ok = 0;
  for (std::size_t i = 0; i < ts.rows(); ++i) ok += (f.predict_proba(ts.row(i), 0) >= 0.5) == ts.labels[i];
  return static_cast<double>(ok) / static_cast<double>(ts.rows());
}

double positive_recall(const Forest& f, const TrainingSet& ts) {
  std::size_t hit = 0, pos = 0;
  for (std::size_t i = 0; i < ts.rows(); ++i)
    if (ts.labels[i]) {
      ++pos;
      hit += f.predict_proba(ts.row(i), 0) >= 0.5;
    }
  return static_cast<double>(hit) / static_cast<double>(pos);
}

}  // namespace

TEST_CASE("config validation") {
  ForestConfig c;
  CHECK_NOTHROW(c.validate());
  c.n_trees = 0;
  CHECK_THROWS_AS(c.validate(), Error);
  c = {};
  c.class_weight_ratio = 0.5;
  CHECK_THROWS_AS(c.validate(), Error);
  c = {};
  c.min_leaf = 0;
  CHECK_THROWS_AS(c.validate(), Error);
  ForestConfig a, b;
  b.jobs = 8;
  CHECK(a.hash() == b.hash());
  b.seed = 1;
  CHECK(a.hash() != b.hash());
}

TEST_CASE("forest separates XOR clusters") {
  const auto train = xor_set(200, 1);
  const auto test = xor_set(200, 2, 1000);
  ForestConfig cfg;
  cfg.n_trees = 50;
  cfg.seed = 3;
  const Forest f = train_forest(train, cfg);
  CHECK(accuracy(f, test) > 0.95);
  for (const auto& t : f.trees())
    for (const auto& n : t.nodes) {
      if (n.feature >= 0) {
        CHECK(n.feature < 2);
        CHECK(n.left > 0);
        CHECK(n.right > 0);
      }
    }
}

TEST_CASE("single-class training data gives a degenerate forest") {
  TrainingSet ts;
  ts.dims = 2;
  for (std::uint64_t i = 0; i < 10; ++i) {
    const double x[2] = {static_cast<double>(i), 1.0};
    ts.add(x, true, i);
  }
  const Forest f = train_forest(ts, ForestConfig{});
  REQUIRE(f.degenerate_class().has_value());
  CHECK(*f.degenerate_class());
  const double probe[2] = {-100.0, 5.0};
  CHECK(f.predict_proba(probe, 0) == 1.0);

  TrainingSet neg;
  neg.dims = 1;
  for (std::uint64_t i = 0; i < 4; ++i) {
    const double x = static_cast<double>(i);
    neg.add({&x, 1}, false, i);
  }
  const Forest g = train_forest(neg, ForestConfig{});
  const double y = 0.5;
  CHECK(g.predict_proba({&y, 1}, 0) == 0.0);
}

TEST_CASE("a single perfect stump votes 1 and 0") {
  TrainingSet ts;
  ts.dims = 1;
  for (std::uint64_t i = 0; i < 8; ++i) {
    const double x = static_cast<double>(i);
    ts.add({&x, 1}, i >= 4, i);
  }
  std::vector<double> w(8, 1.0);
  std::vector<std::uint32_t> counts(8, 1);
  ForestConfig cfg;
  cfg.max_depth = 1;
  const Tree t = grow_tree(ts, w, counts, cfg, 1);
  REQUIRE(t.nodes.size() == 3);
  CHECK(t.nodes[0].threshold > 3.0);
  CHECK(t.nodes[0].threshold < 4.0);
  const double lo = 1.0, hi = 6.0;
  CHECK(t.predict({&lo, 1}) == 0.0);
  CHECK(t.predict({&hi, 1}) == 1.0);
}

TEST_CASE("training is bit-exact for a seed and independent of threads and row order") {
  const auto ts = xor_set(120, 4);
  ForestConfig cfg;
  cfg.n_trees = 20;
  cfg.seed = 99;
  const Forest a = train_forest(ts, cfg, 7);
  const Forest b = train_forest(ts, cfg, 7);
  CHECK(a == b);
  CHECK(a.to_json() == b.to_json());

  cfg.jobs = 4;
  CHECK(train_forest(ts, cfg, 7).trees() == a.trees());

  TrainingSet reversed;
  reversed.dims = ts.dims;
  for (std::size_t i = ts.rows(); i-- > 0;) reversed.add(ts.row(i), ts.labels[i], ts.keys[i]);
  cfg.jobs = 1;
  CHECK(train_forest(reversed, cfg, 7) == a);

  cfg.seed = 100;
  CHECK_FALSE(train_forest(ts, cfg, 7) == a);
}

TEST_CASE("forest json round trip and layout guard") {
  const auto ts = xor_set(60, 5);
  ForestConfig cfg;
  cfg.n_trees = 5;
  cfg.class_weight_ratio = 3;
  cfg.weighted_class = WeightedClass::positive;
  cfg.max_depth = 4;
  const Forest f = train_forest(ts, cfg, 42);
  const Forest g = Forest::from_json(f.to_json());
  CHECK(g == f);
  const double x[2] = {0.1, 0.9};
  CHECK(g.predict_proba(x, 42) == f.predict_proba(x, 42));
  CHECK_THROWS_AS(f.predict_proba(x, 43), Error);
  const double bad[3] = {0, 0, 0};
  CHECK_THROWS_AS(f.predict_proba(bad, 42), Error);
}

TEST_CASE("keys must be unique and rows must match dims") {
  TrainingSet ts;
  ts.dims = 2;
  const double x[2] = {0, 0};
  ts.add(x, true, 1);
  ts.add(x, false, 1);
  CHECK_THROWS_AS(train_forest(ts, ForestConfig{}), Error);
  const double y[3] = {0, 0, 0};
  CHECK_THROWS_AS(ts.add(y, true, 2), Error);
}

TEST_CASE("minority weighting does not lower minority recall") {
  int wins = 0, losses = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto train = imbalanced_set(600, 100 + seed);
    const auto test = imbalanced_set(2000, 500 + seed);
    ForestConfig cfg;
    cfg.n_trees = 25;
    cfg.min_leaf = 5;
    cfg.seed = seed;
    const double r1 = positive_recall(train_forest(train, cfg), test);
    cfg.class_weight_ratio = 20;
    const double r20 = positive_recall(train_forest(train, cfg), test);
    wins += r20 > r1;
    losses += r20 < r1;
  }
  const int n = wins + losses;
  REQUIRE(n > 0);
  // One-sided sign test: P(X >= wins) under Binomial(n, 1/2).
  const double p = wins == 0 ? 1.0 : boost::math::cdf(boost::math::complement(boost::math::binomial(n, 0.5), wins - 1));
  CAPTURE(wins);
  CAPTURE(losses);
  CHECK(p < 0.05);
}
