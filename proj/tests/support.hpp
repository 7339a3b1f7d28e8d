#pragma once

#include <atomic>
#include <filesystem>
#include <string>

#include <unistd.h>

#include <boost/multiprecision/cpp_bin_float.hpp>
#include <boost/multiprecision/cpp_int.hpp>

#include "handuse/metrics.hpp"

namespace testing {

namespace mp = boost::multiprecision;
using Rational = mp::cpp_rational;
using BigFloat = mp::cpp_bin_float_50;

/// Scratch directory removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("handuse_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

inline double to_double(const Rational& r) { return static_cast<double>(BigFloat(r)); }

inline Rational ratio_or_zero(const mp::cpp_int& num, const mp::cpp_int& den) {
  return den == 0 ? Rational(0) : Rational(num, den);
}

/// Textbook binary metrics in exact arithmetic; MCC through a 50-digit sqrt.
struct MetricOracle {
  Rational precision, recall, f1, accuracy;
  BigFloat mcc;
  bool mcc_undefined = false;
};

inline MetricOracle metric_oracle(const handuse::ConfusionCounts& c) {
  const mp::cpp_int tp = c.tp, fp = c.fp, fn = c.fn, tn = c.tn;
  MetricOracle o;
  o.precision = ratio_or_zero(tp, tp + fp);
  o.recall = ratio_or_zero(tp, tp + fn);
  o.f1 = ratio_or_zero(2 * tp, 2 * tp + fp + fn);
  o.accuracy = Rational(tp + tn, tp + tn + fp + fn);
  const mp::cpp_int den = (tp + fp) * (tp + fn) * (tn + fp) * (tn + fn);
  if (den == 0) {
    o.mcc_undefined = true;
  } else {
    o.mcc = BigFloat(tp * tn - fp * fn) / mp::sqrt(BigFloat(den));
  }
  return o;
}

/// Cohen's kappa and PABAK straight from the marginals, exact.
struct KappaOracle {
  Rational observed, expected, kappa, pabak;
};

inline KappaOracle kappa_oracle(const handuse::AgreementTable& t) {
  const std::size_t k = t.k();
  mp::cpp_int n = 0, trace = 0, chance = 0;
  for (std::size_t i = 0; i < k; ++i) {
    mp::cpp_int row = 0, col = 0;
    for (std::size_t j = 0; j < k; ++j) {
      row += t.at(i, j);
      col += t.at(j, i);
      n += t.at(i, j);
    }
    trace += t.at(i, i);
    chance += row * col;
  }
  KappaOracle o;
  o.observed = Rational(trace, n);
  o.expected = Rational(chance, n * n);
  if (o.expected == 1) o.kappa = o.observed == 1 ? 1 : 0;
  else o.kappa = (o.observed - o.expected) / (1 - o.expected);
  o.pabak = (Rational(static_cast<long long>(k)) * o.observed - 1) / Rational(static_cast<long long>(k) - 1);
  return o;
}

}  // namespace testing
