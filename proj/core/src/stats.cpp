#include "handuse/stats.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numbers>
#include <numeric>

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/fisher_f.hpp>
#include <boost/math/distributions/normal.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "handuse/types.hpp"
#include "json.hpp"

namespace handuse {
namespace {

constexpr double kQuadratureTolerance = 1e-10;

double clamp_p(double p) { return std::isnan(p) ? 1.0 : std::clamp(p, 0.0, 1.0); }

double normal_upper(double z) { return 0.5 * std::erfc(z / std::sqrt(2.0)); }

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

double poly(std::initializer_list<double> c, double x) {
  double r = 0;
  for (auto it = std::rbegin(c); it != std::rend(c); ++it) r = r * x + *it;
  return r;
}

/// Midranks (1-based) of `values`; returns sum of t^3 - t over tie groups.
double midranks(std::span<const double> values, std::vector<double>& ranks) {
  const std::size_t n = values.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  ranks.assign(n, 0);
  double ties = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && values[order[j + 1]] == values[order[i]]) ++j;
    const double r = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t t = i; t <= j; ++t) ranks[order[t]] = r;
    const double t = static_cast<double>(j - i + 1);
    ties += t * t * t - t;
    i = j + 1;
  }
  return ties;
}

void check_matrix(const PairedMatrix& m, const char* who) {
  if (m.rows() < 2 || m.cols() < 2) fail(std::string(who) + ": need at least 2 rows and 2 columns");
}

struct AnovaParts {
  double ss_treatment = 0;
  double ss_error = 0;
  double ss_total = 0;
  double df1 = 0;
  double df2 = 0;
  std::vector<double> col_means;
  bool exact_fit = false;  // residual variance is zero relative to the data
};

AnovaParts anova_parts(const PairedMatrix& m) {
  const std::size_t n = m.rows(), k = m.cols();
  AnovaParts p;
  std::vector<double> row_means(n, 0.0);
  p.col_means.assign(k, 0.0);
  double grand = 0;
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < k; ++c) {
      row_means[r] += m.at(r, c);
      p.col_means[c] += m.at(r, c);
      grand += m.at(r, c);
    }
  for (auto& v : row_means) v /= static_cast<double>(k);
  for (auto& v : p.col_means) v /= static_cast<double>(n);
  grand /= static_cast<double>(n * k);
  // Equal column means must give exactly zero, not rounding noise.
  if (std::adjacent_find(p.col_means.begin(), p.col_means.end(), std::not_equal_to<>()) != p.col_means.end())
    for (std::size_t c = 0; c < k; ++c) p.ss_treatment += static_cast<double>(n) * std::pow(p.col_means[c] - grand, 2);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < k; ++c) {
      const double e = m.at(r, c) - row_means[r] - p.col_means[c] + grand;
      p.ss_error += e * e;
      p.ss_total += std::pow(m.at(r, c) - grand, 2);
    }
  p.df1 = static_cast<double>(k - 1);
  p.df2 = static_cast<double>((k - 1) * (n - 1));
  p.exact_fit = p.ss_error <= 1e-24 * std::max(1.0, p.ss_total) || p.ss_error <= 1e-13 * p.ss_total;
  return p;
}

double range_cdf_known_variance(double w, double k) {
  if (w <= 0) return 0.0;
  auto f = [&](double z) {
    const double d = normal_cdf(z) - normal_cdf(z - w);
    if (d <= 0) return 0.0;
    return std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi) * std::pow(d, k - 1.0);
  };
  // phi(z) is below 1e-16 outside [-8.5, 8.5]; split where the integrand peaks.
  using GK = boost::math::quadrature::gauss_kronrod<double, 31>;
  const double mid = std::clamp(w / 2.0, -8.5, 8.5);
  const double v = GK::integrate(f, -8.5, mid, 15, kQuadratureTolerance) +
                   GK::integrate(f, mid, 8.5, 15, kQuadratureTolerance);
  return std::clamp(k * v, 0.0, 1.0);
}

}  // namespace

PairedMatrix::PairedMatrix(std::size_t rows, std::size_t cols, std::vector<double> values,
                           std::vector<std::string> row_names, std::vector<std::string> col_names)
    : rows_(rows), cols_(cols), values_(std::move(values)), row_names_(std::move(row_names)),
      col_names_(std::move(col_names)) {
  if (values_.size() != rows_ * cols_) fail("paired matrix: value count is not rows*cols");
  if (rows_ < 2 || cols_ < 2) fail("paired matrix: need at least 2 rows and 2 columns");
  for (double v : values_)
    if (!std::isfinite(v)) fail("paired matrix: non-finite cell");
  if (!row_names_.empty() && row_names_.size() != rows_) fail("paired matrix: row name count mismatch");
  if (!col_names_.empty() && col_names_.size() != cols_) fail("paired matrix: column name count mismatch");
  if (col_names_.empty())
    for (std::size_t c = 0; c < cols_; ++c) col_names_.push_back("model" + std::to_string(c));
}

std::vector<double> PairedMatrix::column(std::size_t c) const {
  std::vector<double> out(rows_);
  for (std::size_t r = 0; r < rows_; ++r) out[r] = at(r, c);
  return out;
}

TestResult shapiro_wilk(std::span<const double> sample) {
  const std::size_t n = sample.size();
  if (n < 3 || n > 5000) fail("shapiro_wilk: sample size must be in [3, 5000]");
  std::vector<double> x(sample.begin(), sample.end());
  for (double v : x)
    if (!std::isfinite(v)) fail("shapiro_wilk: non-finite value");
  std::sort(x.begin(), x.end());
  if (x.front() == x.back()) fail("zero variance");

  const std::size_t half = n / 2;
  const double an = static_cast<double>(n);
  std::vector<double> a(half);
  if (n == 3) {
    a[0] = std::sqrt(0.5);
  } else {
    const boost::math::normal_distribution<double> std_normal;
    std::vector<double> m(half);
    double summ2 = 0;
    for (std::size_t i = 0; i < half; ++i) {
      m[i] = boost::math::quantile(std_normal, (static_cast<double>(i + 1) - 0.375) / (an + 0.25));
      summ2 += m[i] * m[i];
    }
    summ2 *= 2;
    const double ssumm2 = std::sqrt(summ2);
    const double rsn = 1.0 / std::sqrt(an);
    const double a1 = poly({0.0, 0.221157, -0.147981, -2.07119, 4.434685, -2.706056}, rsn) - m[0] / ssumm2;
    std::size_t first;
    double fac;
    if (n > 5) {
      const double a2 = -m[1] / ssumm2 + poly({0.0, 0.042981, -0.293762, -1.752461, 5.682633, -3.582633}, rsn);
      fac = std::sqrt((summ2 - 2 * m[0] * m[0] - 2 * m[1] * m[1]) / (1 - 2 * a1 * a1 - 2 * a2 * a2));
      a[1] = a2;
      first = 2;
    } else {
      fac = std::sqrt((summ2 - 2 * m[0] * m[0]) / (1 - 2 * a1 * a1));
      first = 1;
    }
    a[0] = a1;
    for (std::size_t i = first; i < half; ++i) a[i] = -m[i] / fac;
  }

  // Centre and scale before the sums; W is location/scale invariant.
  const double mean = std::accumulate(x.begin(), x.end(), 0.0) / an;
  const double range = x.back() - x.front();
  double ss = 0, num = 0;
  for (double v : x) ss += std::pow((v - mean) / range, 2);
  for (std::size_t i = 0; i < half; ++i) num += a[i] * (x[n - 1 - i] - x[i]) / range;
  if (!(ss > 0)) fail("zero variance");
  const double w = std::min(1.0, num * num / ss);

  TestResult r;
  r.method = "shapiro_wilk";
  r.statistic = w;
  r.n = n;
  if (n == 3) {
    r.p_value = clamp_p(6.0 / std::numbers::pi * (std::asin(std::sqrt(w)) - std::numbers::pi / 3.0));
    return r;
  }
  const double w1 = 1.0 - w;
  if (w1 <= 0) {
    r.p_value = 1.0;
    return r;
  }
  double y = std::log(w1);
  double mu, sigma;
  if (n <= 11) {
    const double gamma = poly({-2.273, 0.459}, an);
    if (y >= gamma) {
      r.p_value = 1e-99;
      return r;
    }
    y = -std::log(gamma - y);
    mu = poly({0.544, -0.39978, 0.025054, -6.714e-4}, an);
    sigma = std::exp(poly({1.3822, -0.77857, 0.062767, -0.0020322}, an));
  } else {
    const double ln = std::log(an);
    mu = poly({-1.5861, -0.31082, -0.083751, 0.0038915}, ln);
    sigma = std::exp(poly({-0.4803, -0.082676, 0.0030302}, ln));
  }
  r.p_value = clamp_p(normal_upper((y - mu) / sigma));
  return r;
}

TestResult friedman(const PairedMatrix& m) {
  check_matrix(m, "friedman");
  const std::size_t n = m.rows(), k = m.cols();
  std::vector<double> rank_sums(k, 0.0), row(k), ranks;
  double ties = 0;
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < k; ++c) row[c] = m.at(r, c);
    ties += midranks(row, ranks);
    for (std::size_t c = 0; c < k; ++c) rank_sums[c] += ranks[c];
  }
  const double dn = static_cast<double>(n), dk = static_cast<double>(k);
  TestResult res;
  res.method = "friedman";
  res.df1 = dk - 1;
  res.n = n;
  const double correction = 1.0 - ties / (dn * (dk * dk * dk - dk));
  if (correction <= 0) {
    res.statistic = 0;
    res.p_value = 1;
    res.flagged = true;
    res.note = "all rows fully tied";
    return res;
  }
  const double expected = dn * (dk + 1) / 2;
  double dev = 0;
  for (double s : rank_sums) dev += (s - expected) * (s - expected);
  res.statistic = 12.0 * dev / (dn * dk * (dk + 1)) / correction;
  const boost::math::chi_squared_distribution<double> chi2(dk - 1);
  res.p_value = clamp_p(boost::math::cdf(boost::math::complement(chi2, res.statistic)));
  return res;
}

TestResult rm_anova(const PairedMatrix& m) {
  check_matrix(m, "rm_anova");
  const AnovaParts p = anova_parts(m);
  TestResult res;
  res.method = "rm_anova";
  res.df1 = p.df1;
  res.df2 = p.df2;
  res.n = m.rows();
  if (p.ss_treatment == 0) {
    res.statistic = 0;
    res.p_value = 1;
    if (p.exact_fit) res.flagged = true;
    return res;
  }
  if (p.exact_fit) {
    res.statistic = std::numeric_limits<double>::infinity();
    res.p_value = 0;
    res.flagged = true;
    res.note = "exact fit: zero residual variance";
    return res;
  }
  res.statistic = (p.ss_treatment / p.df1) / (p.ss_error / p.df2);
  const boost::math::fisher_f_distribution<double> f(p.df1, p.df2);
  res.p_value = clamp_p(boost::math::cdf(boost::math::complement(f, res.statistic)));
  return res;
}

TestResult wilcoxon_signed_rank(std::span<const double> a, std::span<const double> b, std::size_t exact_limit) {
  if (a.size() != b.size()) fail("wilcoxon_signed_rank: samples differ in length");
  if (a.size() < 2) fail("wilcoxon_signed_rank: need at least 2 pairs");
  if (exact_limit > 60) fail("wilcoxon_signed_rank: exact limit above 60");
  std::vector<double> d;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a[i] != b[i]) d.push_back(a[i] - b[i]);

  TestResult res;
  res.method = "wilcoxon_signed_rank";
  res.n = d.size();
  if (d.empty()) {
    res.statistic = 0;
    res.p_value = 1;
    res.flagged = true;
    res.note = "all differences zero";
    return res;
  }
  std::vector<double> abs_d(d.size()), ranks;
  std::transform(d.begin(), d.end(), abs_d.begin(), [](double v) { return std::fabs(v); });
  const double ties = midranks(abs_d, ranks);
  double w_plus = 0;
  for (std::size_t i = 0; i < d.size(); ++i)
    if (d[i] > 0) w_plus += ranks[i];
  res.statistic = w_plus;
  const std::size_t n = d.size();

  if (n <= exact_limit) {
    res.method += " (exact)";
    // Doubled midranks are integers; count sign patterns per doubled rank sum.
    std::vector<std::uint64_t> weights(n);
    std::uint64_t total = 0;
    for (std::size_t i = 0; i < n; ++i) {
      weights[i] = static_cast<std::uint64_t>(std::llround(2 * ranks[i]));
      total += weights[i];
    }
    std::vector<std::uint64_t> counts(total + 1, 0);
    counts[0] = 1;
    for (auto w : weights)
      for (std::uint64_t s = total; s >= w; --s) {
        counts[s] += counts[s - w];
        if (s == w) break;
      }
    const auto observed = static_cast<std::uint64_t>(std::llround(2 * w_plus));
    std::uint64_t lower = 0, upper = 0;
    for (std::uint64_t s = 0; s <= total; ++s) {
      if (s <= observed) lower += counts[s];
      if (s >= observed) upper += counts[s];
    }
    const double tail = static_cast<double>(2 * std::min(lower, upper));
    res.p_value = std::min(1.0, tail / std::ldexp(1.0, static_cast<int>(n)));
    return res;
  }

  res.method += " (normal)";
  const double dn = static_cast<double>(n);
  const double mean = dn * (dn + 1) / 4;
  const double var = dn * (dn + 1) * (2 * dn + 1) / 24 - ties / 48;
  if (!(var > 0)) {
    res.p_value = 1;
    return res;
  }
  const double z = std::max(0.0, std::fabs(w_plus - mean) - 0.5) / std::sqrt(var);
  res.p_value = clamp_p(2 * normal_upper(z));
  return res;
}

double studentized_range_cdf(double q, double k, double df) {
  if (!(k >= 2)) fail("studentized_range_cdf: k must be at least 2");
  if (!(df > 0)) fail("studentized_range_cdf: df must be positive");
  if (std::isnan(q)) fail("studentized_range_cdf: q is NaN");
  if (q <= 0) return 0.0;
  if (std::isinf(q)) return 1.0;
  if (std::isinf(df) || df > 1e5) return range_cdf_known_variance(q, k);

  // s = sqrt(chi2_df / df) has density c * s^(df-1) * exp(-df s^2 / 2).
  const double log_c = 0.5 * df * std::log(df) - std::lgamma(df / 2) - (df / 2 - 1) * std::log(2.0);
  auto f = [&](double s) {
    if (s <= 0) return 0.0;
    const double log_density = log_c + (df - 1) * std::log(s) - 0.5 * df * s * s;
    return std::exp(log_density) * range_cdf_known_variance(q * s, k);
  };
  using GK = boost::math::quadrature::gauss_kronrod<double, 31>;
  const double spread = 1.0 / std::sqrt(df);
  const double hi = 1.0 + 14.0 * spread + 10.0 / df;
  const double v = GK::integrate(f, 0.0, 1.0, 15, kQuadratureTolerance) + GK::integrate(f, 1.0, hi, 15, kQuadratureTolerance);
  return std::clamp(v, 0.0, 1.0);
}

std::vector<PairwiseResult> tukey_hsd(const PairedMatrix& m) {
  check_matrix(m, "tukey_hsd");
  const AnovaParts p = anova_parts(m);
  const double k = static_cast<double>(m.cols());
  const double mse = p.ss_error / p.df2;
  std::vector<PairwiseResult> out;
  for (std::size_t i = 0; i < m.cols(); ++i)
    for (std::size_t j = i + 1; j < m.cols(); ++j) {
      PairwiseResult pr;
      pr.a = i;
      pr.b = j;
      auto& r = pr.result;
      r.method = "tukey_hsd";
      r.df1 = k;
      r.df2 = p.df2;
      r.n = m.rows();
      const double diff = std::fabs(p.col_means[i] - p.col_means[j]);
      if (p.exact_fit) {
        r.flagged = true;
        r.note = "exact fit: zero error variance";
        r.statistic = diff == 0 ? 0.0 : std::numeric_limits<double>::infinity();
        r.p_value = diff == 0 ? 1.0 : 0.0;
      } else {
        r.statistic = diff / std::sqrt(mse / static_cast<double>(m.rows()));
        r.p_value = clamp_p(1.0 - studentized_range_cdf(r.statistic, k, p.df2));
      }
      out.push_back(std::move(pr));
    }
  return out;
}

std::string_view to_string(ComparisonBranch b) {
  return b == ComparisonBranch::anova_tukey ? "anova_tukey" : "friedman_wilcoxon";
}

ComparisonReport compare_models(const PairedMatrix& m, const ComparisonOptions& options) {
  check_matrix(m, "compare_models");
  if (!(options.alpha > 0 && options.alpha < 1)) fail("compare_models: alpha must be in (0, 1)");
  ComparisonReport rep;
  rep.alpha = options.alpha;
  rep.bonferroni = options.bonferroni;
  rep.col_names = m.col_names();

  bool all_normal = true;
  for (std::size_t c = 0; c < m.cols(); ++c) {
    NormalityCheck nc;
    nc.column = c;
    nc.name = m.col_names()[c];
    const auto col = m.column(c);
    if (col.size() < 3) {
      nc.note = "too few rows for a normality test";
    } else if (std::all_of(col.begin(), col.end(), [&](double v) { return v == col.front(); })) {
      nc.note = "zero variance";
    } else {
      const auto sw = shapiro_wilk(col);
      nc.w = sw.statistic;
      nc.p_value = sw.p_value;
      nc.normal = sw.p_value >= options.alpha;
    }
    all_normal = all_normal && nc.normal;
    rep.normality.push_back(std::move(nc));
  }

  rep.branch = all_normal ? ComparisonBranch::anova_tukey : ComparisonBranch::friedman_wilcoxon;
  rep.omnibus = all_normal ? rm_anova(m) : friedman(m);
  rep.significant = rep.omnibus.p_value < options.alpha;
  if (!rep.significant) return rep;

  if (all_normal) {
    rep.posthoc = tukey_hsd(m);
  } else {
    const std::size_t pairs = m.cols() * (m.cols() - 1) / 2;
    for (std::size_t i = 0; i < m.cols(); ++i)
      for (std::size_t j = i + 1; j < m.cols(); ++j) {
        const auto a = m.column(i), b = m.column(j);
        PairwiseResult pr{i, j, wilcoxon_signed_rank(a, b)};
        if (options.bonferroni) {
          pr.result.p_value = std::min(1.0, pr.result.p_value * static_cast<double>(pairs));
          pr.result.note = "bonferroni";
        }
        rep.posthoc.push_back(std::move(pr));
      }
  }
  return rep;
}

namespace {

nlohmann::ordered_json finite_or_null(double v) {
  if (std::isfinite(v)) return v;
  return nullptr;
}

nlohmann::ordered_json result_json(const TestResult& r) {
  nlohmann::ordered_json j;
  j["method"] = r.method;
  j["stat"] = finite_or_null(r.statistic);
  j["p"] = r.p_value;
  if (!std::isnan(r.df1)) j["df1"] = r.df1;
  if (!std::isnan(r.df2)) j["df2"] = r.df2;
  j["n"] = r.n;
  j["flagged"] = r.flagged;
  if (!r.note.empty()) j["note"] = r.note;
  return j;
}

}  // namespace

std::string ComparisonReport::to_json() const {
  nlohmann::ordered_json j;
  j["alpha"] = alpha;
  auto& normal = j["normality"] = nlohmann::ordered_json::array();
  for (const auto& nc : normality) {
    nlohmann::ordered_json e;
    e["column"] = nc.name;
    e["W"] = finite_or_null(nc.w);
    e["p"] = finite_or_null(nc.p_value);
    e["normal"] = nc.normal;
    if (!nc.note.empty()) e["note"] = nc.note;
    normal.push_back(std::move(e));
  }
  j["branch"] = to_string(branch);
  j["omnibus"] = result_json(omnibus);
  j["significant"] = significant;
  if (!significant) j["conclusion"] = "no significant difference";
  j["bonferroni"] = bonferroni;
  auto& post = j["posthoc"] = nlohmann::ordered_json::array();
  for (const auto& pr : posthoc) {
    auto e = result_json(pr.result);
    e["pair"] = {col_names.at(pr.a), col_names.at(pr.b)};
    post.push_back(std::move(e));
  }
  return j.dump(2);
}

}  // namespace handuse
