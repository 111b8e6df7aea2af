#include "pirank/stats.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace pirank::stats {

namespace {

// Continued fraction for I_x(a, b) (modified Lentz).
double beta_continued_fraction(double a, double b, double x) {
  constexpr int kMaxIter = 500;
  constexpr double kEps = 1e-16;
  constexpr double kTiny = 1e-300;
  const double qab = a + b;
  const double qap = a + 1.0;
  const double qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::abs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    const double m2 = 2.0 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double delta = d * c;
    h *= delta;
    if (std::abs(delta - 1.0) < kEps) break;
  }
  return h;
}

}  // namespace

double incomplete_beta(double a, double b, double x) {
  if (x < 0.0 || x > 1.0) throw std::domain_error("incomplete_beta: x outside [0, 1]");
  if (x == 0.0 || x == 1.0) return x;
  const double log_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                           a * std::log(x) + b * std::log1p(-x);
  const double front = std::exp(log_front);
  if (x < (a + 1.0) / (a + b + 2.0)) return front * beta_continued_fraction(a, b, x) / a;
  return 1.0 - front * beta_continued_fraction(b, a, 1.0 - x) / b;
}

double student_t_cdf(double t, double dof) {
  if (std::isinf(t)) return t > 0 ? 1.0 : 0.0;
  const double x = dof / (dof + t * t);
  const double tail = 0.5 * incomplete_beta(0.5 * dof, 0.5, x);
  return t >= 0 ? 1.0 - tail : tail;
}

TTestResult paired_t_test(std::span<const double> a, std::span<const double> b,
                          double alpha) {
  if (a.size() != b.size()) {
    throw std::invalid_argument("paired t-test: samples differ in length");
  }
  if (a.size() < 2) throw std::invalid_argument("paired t-test needs at least 2 pairs");
  const std::size_t n = a.size();
  double mean = 0.0;
  for (std::size_t i = 0; i < n; ++i) mean += a[i] - b[i];
  mean /= static_cast<double>(n);
  double ss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dev = (a[i] - b[i]) - mean;
    ss += dev * dev;
  }
  TTestResult r;
  r.n = n;
  r.mean_diff = mean;
  const double dof = static_cast<double>(n - 1);
  const double se = std::sqrt(ss / dof / static_cast<double>(n));
  if (se == 0.0) {
    if (mean == 0.0) {
      r.t = 0.0;
      r.p = 0.5;
    } else {
      r.t = mean > 0 ? std::numeric_limits<double>::infinity()
                     : -std::numeric_limits<double>::infinity();
      r.p = mean > 0 ? 0.0 : 1.0;
    }
  } else {
    r.t = mean / se;
    r.p = 1.0 - student_t_cdf(r.t, dof);
  }
  r.significant = r.p < alpha;
  return r;
}

MethodComparison compare_methods(
    const std::vector<std::vector<std::optional<double>>>& values,
    bool higher_is_better, double alpha) {
  if (values.empty()) throw std::invalid_argument("no methods to compare");
  const std::size_t queries = values[0].size();
  for (const auto& v : values) {
    if (v.size() != queries) throw std::invalid_argument("methods cover different query sets");
  }
  std::vector<std::vector<double>> kept(values.size());
  for (std::size_t q = 0; q < queries; ++q) {
    bool all = true;
    for (const auto& v : values) all = all && v[q].has_value();
    if (!all) continue;
    for (std::size_t m = 0; m < values.size(); ++m) kept[m].push_back(*values[m][q]);
  }

  MethodComparison out;
  out.queries = kept[0].size();
  if (out.queries < 2) throw std::invalid_argument("fewer than 2 comparable queries");
  for (const auto& v : kept) {
    double total = 0.0;
    for (double x : v) total += x;
    out.means.push_back(total / static_cast<double>(v.size()));
  }
  for (std::size_t m = 1; m < out.means.size(); ++m) {
    const bool better = higher_is_better ? out.means[m] > out.means[out.best]
                                         : out.means[m] < out.means[out.best];
    if (better) out.best = m;
  }
  for (std::size_t m = 0; m < kept.size(); ++m) {
    TTestResult r = higher_is_better ? paired_t_test(kept[out.best], kept[m], alpha)
                                     : paired_t_test(kept[m], kept[out.best], alpha);
    out.bold.push_back(m == out.best || !r.significant);
    out.vs_best.push_back(r);
  }
  return out;
}

}  // namespace pirank::stats
