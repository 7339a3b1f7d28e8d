#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace handuse {

/// Binary confusion counts. Merging is associative and commutative.
struct ConfusionCounts {
  std::uint64_t tp = 0;
  std::uint64_t fp = 0;
  std::uint64_t fn = 0;
  std::uint64_t tn = 0;

  std::uint64_t total() const noexcept { return tp + fp + fn + tn; }
  void add(bool truth, bool predicted) noexcept {
    if (truth) ++(predicted ? tp : fn);
    else ++(predicted ? fp : tn);
  }
  ConfusionCounts& operator+=(const ConfusionCounts& o) noexcept {
    tp += o.tp;
    fp += o.fp;
    fn += o.fn;
    tn += o.tn;
    return *this;
  }
  friend ConfusionCounts operator+(ConfusionCounts a, const ConfusionCounts& b) noexcept { return a += b; }
  friend bool operator==(const ConfusionCounts&, const ConfusionCounts&) = default;
};

struct MetricSet {
  double mcc = 0;
  double f1 = 0;
  double precision = 0;
  double recall = 0;
  double accuracy = 0;
  /// MCC denominator was zero (a whole row or column empty); mcc reported as 0.
  bool mcc_undefined = false;
  friend bool operator==(const MetricSet&, const MetricSet&) = default;
};

/// Standard binary metrics. Zero denominators give 0 (MCC additionally flagged).
/// Throws on an empty confusion.
MetricSet metric_set(const ConfusionCounts& cm);

struct MacroSummary {
  MetricSet mean;
  MetricSet sd;  // sample (n - 1) standard deviation
  std::size_t n = 0;
  bool sd_undefined = false;  // n == 1, sd reported as 0
};

/// Mean and sample SD of each metric across participants.
MacroSummary macro_average(std::span<const MetricSet> per_participant);

/// Metrics of the element-wise sum of confusions.
MetricSet micro_average(std::span<const ConfusionCounts> per_participant);

/// k x k contingency table of two raters over shared observations
/// (rows: rater A, columns: rater B).
class AgreementTable {
 public:
  explicit AgreementTable(std::size_t k);
  AgreementTable(std::size_t k, std::vector<std::uint64_t> cells);

  std::size_t k() const noexcept { return k_; }
  std::uint64_t& at(std::size_t row, std::size_t col) { return cells_[row * k_ + col]; }
  std::uint64_t at(std::size_t row, std::size_t col) const { return cells_[row * k_ + col]; }
  void add(std::size_t rater_a, std::size_t rater_b) { ++at(rater_a, rater_b); }
  std::uint64_t total() const noexcept;
  std::uint64_t agreements() const noexcept;

 private:
  std::size_t k_;
  std::vector<std::uint64_t> cells_;
};

struct KappaResult {
  double kappa = 0;
  double observed = 0;  // p_o
  double expected = 0;  // p_e
  bool degenerate = false;  // p_e == 1
};

/// Cohen's kappa. When chance agreement is 1 the value is 1 if observed
/// agreement is also 1, else 0, and `degenerate` is set.
KappaResult cohens_kappa_detail(const AgreementTable& table);
double cohens_kappa(const AgreementTable& table);

/// Prevalence-adjusted bias-adjusted kappa, (k * p_o - 1) / (k - 1).
double pabak(const AgreementTable& table);

/// Landis-Koch band of a kappa value after rounding to two decimals (half
/// away from zero): poor < 0 <= slight <= 0.20 < fair <= 0.40 < moderate
/// <= 0.60 < substantial <= 0.80 < almost perfect. Throws outside [-1, 1].
std::string interpret_kappa(double value);

}  // namespace handuse
