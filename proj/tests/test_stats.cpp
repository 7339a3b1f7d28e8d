#include <cmath>
#include <vector>

#include "doctest.h"
#include "handuse/stats.hpp"
#include "oracles.hpp"

using namespace handuse;

using namespace testing;

TEST_CASE("paired matrix validation") {
  CHECK_THROWS_AS(PairedMatrix(1, 2, {1, 2}), Error);
  CHECK_THROWS_AS(PairedMatrix(2, 1, {1, 2}), Error);
  CHECK_THROWS_AS(PairedMatrix(2, 2, {1, 2, 3}), Error);
  CHECK_THROWS_AS(PairedMatrix(2, 2, {1, 2, NAN, 4}), Error);
  PairedMatrix m(2, 2, {1, 2, 3, 4});
  CHECK(m.column(1) == std::vector<double>{2, 4});
  CHECK(m.col_names() == std::vector<std::string>{"model0", "model1"});
}

TEST_CASE("shapiro-wilk against the frozen reference") {
  const auto canned = load_canned();
  REQUIRE(canned.size() == 20);
  for (const auto& c : canned) {
    const auto r = shapiro_wilk(c.x);
    CAPTURE(c.name);
    CHECK(std::abs(r.statistic - c.w) < 1e-3);
    CHECK(std::abs(r.p_value - c.p) < 1e-3);
    CHECK(r.n == c.x.size());
  }
}

TEST_CASE("shapiro-wilk behaviour") {
  // Equally spaced normal quantiles come from the canned file.
  const auto canned = load_canned();
  const auto it = std::find_if(canned.begin(), canned.end(), [](const Canned& c) { return c.name == "quantiles_n20"; });
  REQUIRE(it != canned.end());
  CHECK(shapiro_wilk(it->x).p_value > 0.9);

  std::vector<double> outlier(9, 1.0);
  outlier.push_back(1000.0);
  CHECK(shapiro_wilk(outlier).p_value < 0.01);

  CHECK_THROWS_WITH_AS(shapiro_wilk(std::vector<double>(5, 2.0)), doctest::Contains("zero variance"), Error);
  CHECK_THROWS_AS(shapiro_wilk(std::vector<double>{1.0, 2.0}), Error);

  // Location and scale invariance.
  const auto x = normal_draws(40, 0, 1, 8);
  std::vector<double> y;
  for (double v : x) y.push_back(3.0 * v + 100.0);
  CHECK(shapiro_wilk(y).statistic == doctest::Approx(shapiro_wilk(x).statistic).epsilon(1e-10));
}

TEST_CASE("wilcoxon exact path equals 2^n enumeration") {
  CHECK(wilcoxon_signed_rank(std::vector<double>{1, 2, 3, 4, 5}, std::vector<double>{0, 0, 0, 0, 0}).statistic == 15);
  CHECK(wilcoxon_signed_rank(std::vector<double>{1, 2, 3, 4, 5}, std::vector<double>{0, 0, 0, 0, 0}).p_value ==
        doctest::Approx(0.0625));

  std::mt19937_64 gen(21);
  std::uniform_int_distribution<int> coarse(-4, 4);  // integer data forces ties and zeros
  std::normal_distribution<double> fine(0.3, 1.0);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t n = 2 + trial % 11;
    std::vector<double> a(n), b(n, 0.0);
    for (auto& v : a) v = trial % 2 ? coarse(gen) : fine(gen);
    if (std::all_of(a.begin(), a.end(), [](double v) { return v == 0; })) a[0] = 1;
    const auto r = wilcoxon_signed_rank(a, b);
    CAPTURE(trial);
    CHECK(r.p_value == wilcoxon_enumeration(a, b));
  }
}

TEST_CASE("wilcoxon degenerate and symmetric cases") {
  std::vector<double> a = {1, 2, 3}, b = a;
  auto r = wilcoxon_signed_rank(a, b);
  CHECK(r.p_value == 1.0);
  CHECK(r.statistic == 0.0);
  CHECK(r.flagged);
  CHECK_THROWS_AS(wilcoxon_signed_rank(std::vector<double>{1, 2}, std::vector<double>{1}), Error);

  const auto x = normal_draws(14, 0.4, 1, 3), y = normal_draws(14, 0, 1, 4);
  CHECK(wilcoxon_signed_rank(x, y).p_value == doctest::Approx(wilcoxon_signed_rank(y, x).p_value).epsilon(1e-15));
}

TEST_CASE("wilcoxon normal approximation against enumeration and permutation") {
  const auto a15 = normal_draws(15, 0.5, 1, 30), b15 = normal_draws(15, 0, 1, 31);
  const double approx15 = wilcoxon_signed_rank(a15, b15, 0).p_value;
  CHECK(std::abs(approx15 - wilcoxon_enumeration(a15, b15)) < 0.01);

  const auto a30 = normal_draws(30, 0.3, 1, 40), b30 = normal_draws(30, 0, 1, 41);
  const auto r30 = wilcoxon_signed_rank(a30, b30);
  CHECK(std::abs(r30.p_value - wilcoxon_signflip(a30, b30, 200000, 5)) < 0.02);
  CHECK(r30.n == 30);
}

TEST_CASE("friedman") {
  PairedMatrix same(4, 3, {1, 1, 1, 2, 2, 2, 5, 5, 5, 0, 0, 0});
  auto s = friedman(same);
  CHECK(s.statistic == 0.0);
  CHECK(s.p_value == 1.0);
  CHECK(s.flagged);

  PairedMatrix identical_cols(3, 3, {1, 1, 1, 2, 2, 2, 3, 3, 3});
  CHECK(friedman(identical_cols).p_value == 1.0);

  std::vector<double> v;
  for (int i = 0; i < 21; ++i)
    for (double c : {0.1, 0.2, 0.9}) v.push_back(c + 0.001 * i);
  auto e = friedman(PairedMatrix(21, 3, v));
  CHECK(e.statistic == doctest::Approx(42.0));
  CHECK(e.p_value < 0.001);
  CHECK(e.df1 == 2);

  // Structured k=3, n=10 data with a moderate effect and a tie.
  PairedMatrix m(10, 3, {0.61, 0.55, 0.70, 0.40, 0.42, 0.47, 0.80, 0.71, 0.79, 0.52, 0.50, 0.58, 0.33, 0.35, 0.31,
                         0.66, 0.60, 0.66, 0.45, 0.39, 0.50, 0.72, 0.74, 0.78, 0.58, 0.49, 0.57, 0.38, 0.36, 0.44});
  const auto f = friedman(m);
  CHECK(std::abs(f.p_value - friedman_permutation(m, 100000, 9)) < 0.02);
  CHECK(f.statistic == doctest::Approx(friedman_chi2_plain(m) / (1.0 - 6.0 / (10 * 24.0))).epsilon(1e-12));
}

TEST_CASE("rm-anova") {
  PairedMatrix same(4, 2, {1, 1, 2, 2, 5, 5, 3, 3});
  auto s = rm_anova(same);
  CHECK(s.statistic == 0.0);
  CHECK(s.p_value == 1.0);

  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto a = normal_draws(12, 0.3, 1, seed), b = normal_draws(12, 0, 1, seed + 50);
    const auto r = rm_anova(from_columns({a, b}));
    CHECK(std::abs(r.p_value - paired_t_p(a, b)) < 1e-9);
    CHECK(r.df1 == 1);
    CHECK(r.df2 == 11);
  }

  const auto a = normal_draws(10, 0, 1, 1), b = normal_draws(10, 0.5, 1, 2), c = normal_draws(10, 1, 1, 3);
  const auto base = rm_anova(from_columns({a, b, c}));
  auto shift = [](std::vector<double> v) {
    for (auto& x : v) x += 7.5;
    return v;
  };
  CHECK(rm_anova(from_columns({shift(a), shift(b), shift(c)})).statistic ==
        doctest::Approx(base.statistic).epsilon(1e-9));

  // Columns differ by exact constants: zero residual.
  std::vector<double> col0 = {1, 2, 3, 4}, col1 = {2, 3, 4, 5};
  auto exact = rm_anova(from_columns({col0, col1}));
  CHECK(exact.flagged);
  CHECK(exact.p_value == 0.0);
}

TEST_CASE("studentized range distribution") {
  const std::vector<double> qs = {1.0, 2.0, 3.0, 3.5, 4.5};
  for (auto [k, df] : std::vector<std::pair<int, double>>{{3, 10}, {4, 30}, {2, 5}}) {
    const auto mc = studentized_range_mc(qs, k, df, 1000000, 77 + k);
    for (std::size_t i = 0; i < qs.size(); ++i) {
      CAPTURE(k);
      CAPTURE(df);
      CAPTURE(qs[i]);
      CHECK(std::abs(studentized_range_cdf(qs[i], k, df) - mc[i]) < 0.005);
    }
  }
  // Tabled 5% critical values.
  CHECK(studentized_range_cdf(3.877, 3, 10) == doctest::Approx(0.95).epsilon(1e-3));
  CHECK(studentized_range_cdf(3.314, 3, INFINITY) == doctest::Approx(0.95).epsilon(1e-3));
  CHECK(studentized_range_cdf(0.0, 3, 10) == 0.0);
  // k=2, known variance: Q = sqrt(2)|Z|.
  CHECK(studentized_range_cdf(2.0, 2, INFINITY) == doctest::Approx(std::erf(2.0 / 2.0)).epsilon(1e-6));
}

TEST_CASE("tukey hsd") {
  PairedMatrix equal(4, 3, {1, 1, 1, 2, 2, 2, 3, 3, 3, 4, 4, 4});
  for (const auto& p : tukey_hsd(equal)) {
    CHECK(p.result.statistic == 0.0);
    CHECK(p.result.p_value == 1.0);
  }

  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto a = normal_draws(15, 0.4, 1, seed + 10), b = normal_draws(15, 0, 1, seed + 20);
    const auto m = from_columns({a, b});
    const auto t = tukey_hsd(m);
    REQUIRE(t.size() == 1);
    CHECK(std::abs(t[0].result.p_value - rm_anova(m).p_value) < 1e-6);
    CHECK(std::abs(t[0].result.p_value - paired_t_p(a, b)) < 1e-6);
  }

  const auto x = normal_draws(12, 0, 0.1, 1), y = normal_draws(12, 1, 0.1, 2), z = normal_draws(12, 2, 0.1, 3);
  const auto sep = tukey_hsd(from_columns({x, y, z}));
  REQUIRE(sep.size() == 3);
  for (const auto& p : sep) CHECK(p.result.p_value < 0.01);
}

TEST_CASE("compare_models branch logic") {
  // Normal-shaped columns with a clear shift.
  std::vector<std::vector<double>> normal_cols;
  for (int j = 0; j < 3; ++j) normal_cols.push_back(normal_draws(21, 0.4 + 0.1 * j, 0.1, 200 + j));
  auto anova = compare_models(from_columns(normal_cols));
  for (const auto& c : anova.normality) CHECK(c.normal);
  CHECK(anova.branch == ComparisonBranch::anova_tukey);
  CHECK(anova.omnibus.method.find("rm_anova") != std::string::npos);
  CHECK(anova.significant);
  CHECK(anova.posthoc.size() == 3);
  CHECK(anova.omnibus.n == 21);

  // One skewed column (many zeros, a few large values).
  auto skew = normal_cols;
  for (int i = 0; i < 21; ++i) skew[1][i] = i < 15 ? 0.01 * i : 0.9 + 0.01 * i;
  auto fr = compare_models(from_columns(skew));
  CHECK_FALSE(fr.normality[1].normal);
  CHECK(fr.branch == ComparisonBranch::friedman_wilcoxon);
  CHECK(fr.omnibus.method.find("friedman") != std::string::npos);

  // Identical columns: no effect, no post hoc.
  std::vector<std::vector<double>> same(3, normal_cols[0]);
  auto nil = compare_models(from_columns(same));
  CHECK_FALSE(nil.significant);
  CHECK(nil.omnibus.p_value == 1.0);
  CHECK(nil.posthoc.empty());
  CHECK(nil.to_json().find("no significant difference") != std::string::npos);

  // Bonferroni multiplies the Wilcoxon p-values by the number of pairs.
  ComparisonOptions bonf;
  bonf.bonferroni = true;
  auto plain = compare_models(from_columns(skew));
  auto corrected = compare_models(from_columns(skew), bonf);
  REQUIRE(plain.posthoc.size() == corrected.posthoc.size());
  for (std::size_t i = 0; i < plain.posthoc.size(); ++i)
    CHECK(corrected.posthoc[i].result.p_value ==
          doctest::Approx(std::min(1.0, 3 * plain.posthoc[i].result.p_value)));
}
