#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace pirank::stats {

/// Regularized incomplete beta I_x(a, b) via continued fraction.
double incomplete_beta(double a, double b, double x);
/// CDF of Student's t with `dof` degrees of freedom.
double student_t_cdf(double t, double dof);

struct TTestResult {
  double t = 0.0;
  double p = 1.0;   // one-sided, H1: mean(a - b) > 0
  bool significant = false;
  std::size_t n = 0;
  double mean_diff = 0.0;
};

/// One-sided paired t-test of mean(a - b) > 0. When every difference is
/// equal the t statistic is 0 (all equal to zero) or +/-infinity.
TTestResult paired_t_test(std::span<const double> a, std::span<const double> b,
                          double alpha = 0.05);

/// Per-metric comparison of several methods on the same queries.
struct MethodComparison {
  std::vector<double> means;
  std::size_t best = 0;
  /// Test of the best method against each method (entry `best` is a
  /// self-comparison with t = 0).
  std::vector<TTestResult> vs_best;
  /// Best method and every method not significantly worse than it.
  std::vector<bool> bold;
  std::size_t queries = 0;
};

/// values[m][q] is method m's value on query q; nullopt marks a skipped
/// query, which is dropped from every method to keep the test paired.
MethodComparison compare_methods(
    const std::vector<std::vector<std::optional<double>>>& values,
    bool higher_is_better, double alpha = 0.05);

}  // namespace pirank::stats
