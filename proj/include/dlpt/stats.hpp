#pragma once

#include <span>
#include <vector>

namespace dlpt::stats {

/// Pairwise (tree) summation: order-deterministic and accurate.
double pairwise_sum(std::span<const double> v);
double mean(std::span<const double> v);
/// Mean squared deviation (divides by n).
double population_variance(std::span<const double> v);
/// Unbiased variance (divides by n - 1).
double sample_variance(std::span<const double> v);
double sample_sd(std::span<const double> v);
double skewness(std::span<const double> v);
double excess_kurtosis(std::span<const double> v);

/// Standard normal quantile.
double normal_quantile(double p);
/// z such that P(|Z| <= z) = confidence.
double two_sided_z(double confidence);
/// Two-sided p-value of a t statistic with df degrees of freedom.
double t_test_p_value(double t, double df);
/// Paired t-test of mean(a - b) = 0; returns the two-sided p-value.
double paired_t_p_value(std::span<const double> a, std::span<const double> b);

struct LineFit {
  double slope = 0.0;
  double intercept = 0.0;
};
/// Ordinary least squares y = intercept + slope x.
LineFit ols_line(std::span<const double> x, std::span<const double> y);
/// Slope of log(y) against log(x); all entries must be positive.
double log_log_slope(std::span<const double> x, std::span<const double> y);

}  // namespace dlpt::stats
