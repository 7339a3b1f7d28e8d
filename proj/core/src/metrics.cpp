#include "handuse/metrics.hpp"

#include <cmath>
#include <numeric>

#include "handuse/types.hpp"

namespace handuse {
namespace {
__extension__ typedef __int128 i128;
}  // namespace

MetricSet metric_set(const ConfusionCounts& cm) {
  if (cm.total() == 0) fail("metric_set: empty confusion");
  MetricSet m;
  const auto tp = static_cast<i128>(cm.tp), fp = static_cast<i128>(cm.fp), fn = static_cast<i128>(cm.fn),
             tn = static_cast<i128>(cm.tn);
  const auto ratio = [](i128 num, i128 den) {
    return den == 0 ? 0.0 : static_cast<double>(static_cast<long double>(num) / static_cast<long double>(den));
  };
  m.precision = ratio(tp, tp + fp);
  m.recall = ratio(tp, tp + fn);
  m.accuracy = ratio(tp + tn, tp + fp + fn + tn);
  m.f1 = ratio(2 * tp, 2 * tp + fp + fn);

  const i128 num = tp * tn - fp * fn;
  const i128 a = (tp + fp) * (tp + fn);
  const i128 b = (tn + fp) * (tn + fn);
  if (a == 0 || b == 0) {
    m.mcc = 0.0;
    m.mcc_undefined = true;
  } else {
    const long double den = std::sqrt(static_cast<long double>(a)) * std::sqrt(static_cast<long double>(b));
    m.mcc = static_cast<double>(static_cast<long double>(num) / den);
    m.mcc = std::fmax(-1.0, std::fmin(1.0, m.mcc));
  }
  return m;
}

namespace {

constexpr double MetricSet::*kFields[] = {&MetricSet::mcc, &MetricSet::f1, &MetricSet::precision, &MetricSet::recall,
                                          &MetricSet::accuracy};

}  // namespace

MacroSummary macro_average(std::span<const MetricSet> per_participant) {
  if (per_participant.empty()) fail("macro_average: no participants");
  MacroSummary s;
  s.n = per_participant.size();
  const double n = static_cast<double>(s.n);
  for (auto field : kFields) {
    double sum = 0;
    for (const auto& m : per_participant) sum += m.*field;
    const double mean = sum / n;
    double ss = 0;
    for (const auto& m : per_participant) ss += (m.*field - mean) * (m.*field - mean);
    s.mean.*field = mean;
    s.sd.*field = s.n > 1 ? std::sqrt(ss / (n - 1)) : 0.0;
  }
  for (const auto& m : per_participant) s.mean.mcc_undefined = s.mean.mcc_undefined || m.mcc_undefined;
  s.sd_undefined = s.n == 1;
  return s;
}

MetricSet micro_average(std::span<const ConfusionCounts> per_participant) {
  if (per_participant.empty()) fail("micro_average: no participants");
  ConfusionCounts pooled;
  for (const auto& c : per_participant) pooled += c;
  return metric_set(pooled);
}

AgreementTable::AgreementTable(std::size_t k) : k_(k), cells_(k * k, 0) {
  if (k < 2) fail("agreement table needs at least 2 categories");
}

AgreementTable::AgreementTable(std::size_t k, std::vector<std::uint64_t> cells) : k_(k), cells_(std::move(cells)) {
  if (k < 2) fail("agreement table needs at least 2 categories");
  if (cells_.size() != k * k) fail("agreement table cell count is not k*k");
}

std::uint64_t AgreementTable::total() const noexcept { return std::accumulate(cells_.begin(), cells_.end(), std::uint64_t{0}); }

std::uint64_t AgreementTable::agreements() const noexcept {
  std::uint64_t t = 0;
  for (std::size_t i = 0; i < k_; ++i) t += at(i, i);
  return t;
}

KappaResult cohens_kappa_detail(const AgreementTable& table) {
  const std::uint64_t n = table.total();
  if (n == 0) fail("cohens_kappa: empty table");
  i128 chance = 0;  // sum of row_i * col_i
  for (std::size_t i = 0; i < table.k(); ++i) {
    i128 row = 0, col = 0;
    for (std::size_t j = 0; j < table.k(); ++j) {
      row += table.at(i, j);
      col += table.at(j, i);
    }
    chance += row * col;
  }
  const i128 nn = static_cast<i128>(n) * static_cast<i128>(n);
  const i128 agree = static_cast<i128>(table.agreements());
  KappaResult r;
  r.observed = static_cast<double>(agree) / static_cast<double>(n);
  r.expected = static_cast<double>(static_cast<long double>(chance) / static_cast<long double>(nn));
  if (chance == nn) {
    r.degenerate = true;
    r.kappa = agree == static_cast<i128>(n) ? 1.0 : 0.0;
    return r;
  }
  // (p_o - p_e) / (1 - p_e) with both scaled by n^2, exact in integers.
  const i128 num = static_cast<i128>(n) * agree - chance;
  const i128 den = nn - chance;
  r.kappa = static_cast<double>(static_cast<long double>(num) / static_cast<long double>(den));
  return r;
}

double cohens_kappa(const AgreementTable& table) { return cohens_kappa_detail(table).kappa; }

double pabak(const AgreementTable& table) {
  const std::uint64_t n = table.total();
  if (n == 0) fail("pabak: empty table");
  const double k = static_cast<double>(table.k());
  const double p_o = static_cast<double>(table.agreements()) / static_cast<double>(n);
  return (k * p_o - 1.0) / (k - 1.0);
}

std::string interpret_kappa(double value) {
  if (!(value >= -1.0 && value <= 1.0)) fail("interpret_kappa: value outside [-1, 1]");
  const long hundredths = std::lround(value * 100.0);
  if (hundredths < 0) return "poor";
  if (hundredths <= 20) return "slight";
  if (hundredths <= 40) return "fair";
  if (hundredths <= 60) return "moderate";
  if (hundredths <= 80) return "substantial";
  return "almost perfect";
}

}  // namespace handuse
