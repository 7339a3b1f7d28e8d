#include <cmath>
#include <random>
#include <vector>

#include "doctest.h"
#include "handuse/metrics.hpp"
#include "handuse/types.hpp"
#include "support.hpp"

using namespace handuse;
using testing::metric_oracle;
using testing::to_double;

namespace {

ConfusionCounts cm(std::uint64_t tp, std::uint64_t fp, std::uint64_t fn, std::uint64_t tn) { return {tp, fp, fn, tn}; }

}  // namespace

TEST_CASE("metric_set worked examples") {
  auto perfect = metric_set(cm(5, 0, 0, 5));
  CHECK(perfect.mcc == 1.0);
  CHECK(perfect.f1 == 1.0);
  CHECK(perfect.accuracy == 1.0);

  CHECK(metric_set(cm(0, 5, 5, 0)).mcc == -1.0);

  auto m = metric_set(cm(45, 5, 15, 35));
  CHECK(m.mcc == doctest::Approx(0.6124).epsilon(1e-4));
  CHECK(m.f1 == doctest::Approx(0.8182).epsilon(1e-4));
  CHECK(m.precision == doctest::Approx(0.90));
  CHECK(m.recall == doctest::Approx(0.75));
  CHECK(m.accuracy == doctest::Approx(0.80));
  CHECK_FALSE(m.mcc_undefined);
}

TEST_CASE("zero denominators report zero and flag mcc") {
  auto m = metric_set(cm(0, 0, 3, 7));  // no predicted positives
  CHECK(m.precision == 0.0);
  CHECK(m.recall == 0.0);
  CHECK(m.f1 == 0.0);
  CHECK(m.mcc == 0.0);
  CHECK(m.mcc_undefined);
  CHECK(m.accuracy == doctest::Approx(0.7));

  auto all_neg = metric_set(cm(0, 0, 0, 4));
  CHECK(all_neg.mcc_undefined);
  CHECK(all_neg.accuracy == 1.0);

  CHECK_THROWS_AS(metric_set(ConfusionCounts{}), Error);
}

TEST_CASE("metric_set agrees with the exact oracle on random confusions") {
  std::mt19937_64 gen(11);
  std::uniform_int_distribution<std::uint64_t> small(0, 30), large(0, 1'000'000);
  for (int i = 0; i < 1000; ++i) {
    auto& d = i % 2 ? small : large;
    ConfusionCounts c = cm(d(gen), d(gen), d(gen), d(gen));
    if (c.total() == 0) c.tn = 1;
    const auto got = metric_set(c);
    const auto want = metric_oracle(c);
    CAPTURE(c.tp);
    CAPTURE(c.fp);
    CAPTURE(c.fn);
    CAPTURE(c.tn);
    CHECK(std::abs(got.precision - to_double(want.precision)) <= 1e-12);
    CHECK(std::abs(got.recall - to_double(want.recall)) <= 1e-12);
    CHECK(std::abs(got.f1 - to_double(want.f1)) <= 1e-12);
    CHECK(std::abs(got.accuracy - to_double(want.accuracy)) <= 1e-12);
    CHECK(got.mcc_undefined == want.mcc_undefined);
    CHECK(std::abs(got.mcc - static_cast<double>(want.mcc)) <= 1e-12);
  }
}

TEST_CASE("inverting predictions negates mcc, renaming classes keeps it") {
  std::mt19937_64 gen(5);
  std::uniform_int_distribution<std::uint64_t> d(1, 500);
  for (int i = 0; i < 200; ++i) {
    const auto c = cm(d(gen), d(gen), d(gen), d(gen));
    // Inverting every prediction: tp<->fn, fp<->tn.
    const auto inverted = cm(c.fn, c.tn, c.tp, c.fp);
    CHECK(metric_set(inverted).mcc == doctest::Approx(-metric_set(c).mcc).epsilon(1e-12));
    // Renaming the classes keeps mcc.
    const auto renamed = cm(c.tn, c.fn, c.fp, c.tp);
    CHECK(metric_set(renamed).mcc == doctest::Approx(metric_set(c).mcc).epsilon(1e-12));
  }
}

TEST_CASE("confusion merge is associative and commutative") {
  const auto a = cm(1, 2, 3, 4), b = cm(10, 0, 5, 1), c = cm(0, 7, 0, 9);
  CHECK((a + b) + c == a + (b + c));
  CHECK(a + b == b + a);
  ConfusionCounts x;
  x.add(true, true);
  x.add(true, false);
  x.add(false, true);
  x.add(false, false);
  x.add(false, false);
  CHECK(x == cm(1, 1, 1, 2));
}

TEST_CASE("macro average is mean and sample sd") {
  std::vector<MetricSet> two(2);
  two[0].mcc = 0.5;
  two[1].mcc = 0.7;
  auto s = macro_average(two);
  CHECK(s.n == 2);
  CHECK(s.mean.mcc == doctest::Approx(0.6));
  CHECK(s.sd.mcc == doctest::Approx(std::sqrt(0.02)));
  CHECK_FALSE(s.sd_undefined);

  std::vector<MetricSet> same(4, metric_set(cm(3, 1, 1, 3)));
  auto z = macro_average(same);
  CHECK(z.sd.mcc == doctest::Approx(0.0));
  CHECK(z.sd.f1 == doctest::Approx(0.0));

  std::vector<MetricSet> one(1, metric_set(cm(3, 1, 1, 3)));
  auto u = macro_average(one);
  CHECK(u.sd_undefined);
  CHECK(u.sd.mcc == 0.0);
  CHECK(u.mean == one[0]);

  std::vector<MetricSet> many(21);
  for (int i = 0; i < 21; ++i) many[i].mcc = i / 20.0;
  auto m21 = macro_average(many);
  CHECK(m21.n == 21);
  CHECK(m21.mean.mcc == doctest::Approx(0.5));
}

TEST_CASE("micro average pools confusions") {
  std::vector<ConfusionCounts> parts = {cm(5, 0, 0, 5), cm(0, 5, 5, 0)};
  auto m = micro_average(parts);
  CHECK(m.mcc == 0.0);
  CHECK(m.accuracy == 0.5);

  std::vector<ConfusionCounts> single = {cm(45, 5, 15, 35)};
  CHECK(micro_average(single) == metric_set(single[0]));

  std::vector<ConfusionCounts> perfect = {cm(3, 0, 0, 2), cm(1, 0, 0, 9)};
  auto p = micro_average(perfect);
  CHECK(p.mcc == 1.0);
  CHECK(p.f1 == 1.0);
}
