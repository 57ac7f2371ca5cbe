#pragma once

#include <span>

namespace epicode {

/// Regularized incomplete beta I_x(a, b) by Lentz's continued fraction.
double incomplete_beta(double a, double b, double x);

/// P(T > t) for Student's t with df degrees of freedom.
double student_t_upper_tail(double t, double df);

struct TTestResult {
  double t_statistic = 0.0;
  int degrees_of_freedom = 0;
  /// P(T > t): small when a tends to exceed b.
  double p_value_one_tailed = 1.0;
};

/// Paired test on d = a - b with t = mean(d) / (sd(d) / sqrt(n)), df = n - 1.
/// Throws DataError on unequal lengths, n < 2, or zero-variance differences.
TTestResult paired_t_test(std::span<const double> a, std::span<const double> b);

}  // namespace epicode
