#pragma once

#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <vector>

namespace handuse {

/// Participants (rows) by models (columns), no missing cells.
class PairedMatrix {
 public:
  PairedMatrix(std::size_t rows, std::size_t cols, std::vector<double> values, std::vector<std::string> row_names = {},
               std::vector<std::string> col_names = {});

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  double at(std::size_t r, std::size_t c) const { return values_[r * cols_ + c]; }
  std::vector<double> column(std::size_t c) const;
  const std::vector<std::string>& row_names() const noexcept { return row_names_; }
  const std::vector<std::string>& col_names() const noexcept { return col_names_; }

 private:
  std::size_t rows_, cols_;
  std::vector<double> values_;
  std::vector<std::string> row_names_, col_names_;
};

struct TestResult {
  std::string method;
  double statistic = 0;
  double p_value = 1;
  double df1 = std::numeric_limits<double>::quiet_NaN();
  double df2 = std::numeric_limits<double>::quiet_NaN();
  std::size_t n = 0;
  /// Degenerate input: all differences zero (Wilcoxon), zero error variance
  /// (ANOVA, Tukey), or all rows tied (Friedman).
  bool flagged = false;
  std::string note;
};

/// Shapiro-Wilk W with Royston's AS R94 p-value. 3 <= n <= 5000; throws
/// "zero variance" on a constant sample.
TestResult shapiro_wilk(std::span<const double> sample);

/// Friedman chi-square on within-row midranks with tie correction; p from chi2(k - 1).
TestResult friedman(const PairedMatrix& m);

/// One-way within-subjects ANOVA, F on (k - 1, (k - 1)(n - 1)) df, no
/// sphericity correction.
TestResult rm_anova(const PairedMatrix& m);

/// Two-sided Wilcoxon signed-rank test on a - b. Zero differences are
/// dropped, tied |differences| get midranks. Exact null distribution for up to
/// `exact_limit` nonzero pairs, normal approximation with continuity correction
/// beyond. Statistic is the positive-rank sum W+.
TestResult wilcoxon_signed_rank(std::span<const double> a, std::span<const double> b, std::size_t exact_limit = 25);

/// Studentized range CDF P(Q <= q) for k means and `df` error degrees of
/// freedom (df = +inf for a known variance). Nested adaptive quadrature.
double studentized_range_cdf(double q, double k, double df);

struct PairwiseResult {
  std::size_t a = 0;
  std::size_t b = 0;
  TestResult result;
};

/// Tukey HSD on column means using the repeated-measures ANOVA error mean square.
std::vector<PairwiseResult> tukey_hsd(const PairedMatrix& m);

enum class ComparisonBranch { anova_tukey, friedman_wilcoxon };
std::string_view to_string(ComparisonBranch b);

struct NormalityCheck {
  std::size_t column = 0;
  std::string name;
  double w = std::numeric_limits<double>::quiet_NaN();
  double p_value = std::numeric_limits<double>::quiet_NaN();
  bool normal = false;
  std::string note;  // set when the test could not run (constant column, n < 3)
};

struct ComparisonOptions {
  double alpha = 0.05;
  bool bonferroni = false;  // Wilcoxon post hoc correction
};

struct ComparisonReport {
  std::vector<NormalityCheck> normality;
  ComparisonBranch branch = ComparisonBranch::friedman_wilcoxon;
  TestResult omnibus;
  bool significant = false;
  std::vector<PairwiseResult> posthoc;  // empty when the omnibus test is not significant
  std::vector<std::string> col_names;
  double alpha = 0.05;
  bool bonferroni = false;

  std::string to_json() const;
};

/// Shapiro-Wilk per column; all normal -> RM-ANOVA + Tukey, otherwise
/// Friedman + pairwise Wilcoxon. Post hoc runs only when omnibus p < alpha.
ComparisonReport compare_models(const PairedMatrix& m, const ComparisonOptions& options = {});

}  // namespace handuse
