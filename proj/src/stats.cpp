#include "dlpt/stats.hpp"

#include "dlpt/error.hpp"

#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/students_t.hpp>

#include <cmath>
#include <limits>

namespace dlpt::stats {

double pairwise_sum(std::span<const double> v) {
  if (v.size() <= 16) {
    double s = 0.0;
    for (double x : v) s += x;
    return s;
  }
  const auto half = v.size() / 2;
  return pairwise_sum(v.first(half)) + pairwise_sum(v.subspan(half));
}

double mean(std::span<const double> v) {
  if (v.empty()) throw InvalidInput("mean of an empty sample");
  return pairwise_sum(v) / static_cast<double>(v.size());
}

namespace {
double central_moment(std::span<const double> v, int power) {
  const double m = mean(v);
  std::vector<double> d(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) d[i] = std::pow(v[i] - m, power);
  return pairwise_sum(d) / static_cast<double>(v.size());
}
}  // namespace

double population_variance(std::span<const double> v) { return central_moment(v, 2); }

double sample_variance(std::span<const double> v) {
  if (v.size() < 2) return 0.0;
  return population_variance(v) * static_cast<double>(v.size()) / static_cast<double>(v.size() - 1);
}

double sample_sd(std::span<const double> v) { return std::sqrt(sample_variance(v)); }

double skewness(std::span<const double> v) {
  const double m2 = central_moment(v, 2);
  return m2 > 0.0 ? central_moment(v, 3) / std::pow(m2, 1.5) : 0.0;
}

double excess_kurtosis(std::span<const double> v) {
  const double m2 = central_moment(v, 2);
  return m2 > 0.0 ? central_moment(v, 4) / (m2 * m2) - 3.0 : 0.0;
}

double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) throw InvalidInput("quantile level must be in (0, 1)");
  return boost::math::quantile(boost::math::normal_distribution<double>(), p);
}

double two_sided_z(double confidence) {
  if (!(confidence > 0.0 && confidence < 1.0)) throw InvalidInput("confidence must be in (0, 1)");
  return normal_quantile(0.5 + 0.5 * confidence);
}

double t_test_p_value(double t, double df) {
  if (!std::isfinite(t)) return 0.0;
  if (!(df > 0.0)) return std::numeric_limits<double>::quiet_NaN();
  boost::math::students_t_distribution<double> dist(df);
  return 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t)));
}

double paired_t_p_value(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.size() < 2) throw InvalidInput("paired test needs two equal samples of size >= 2");
  std::vector<double> d(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) d[i] = a[i] - b[i];
  const double m = mean(d);
  const double sd = sample_sd(d);
  if (sd == 0.0) return m == 0.0 ? 1.0 : 0.0;
  return t_test_p_value(m / (sd / std::sqrt(static_cast<double>(d.size()))), static_cast<double>(d.size() - 1));
}

LineFit ols_line(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) throw InvalidInput("line fit needs at least two points");
  const double mx = mean(x), my = mean(y);
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  if (sxx == 0.0) throw InvalidInput("line fit needs distinct x values");
  const double slope = sxy / sxx;
  return {slope, my - slope * mx};
}

double log_log_slope(std::span<const double> x, std::span<const double> y) {
  std::vector<double> lx(x.size()), ly(y.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!(x[i] > 0.0 && y[i] > 0.0)) throw InvalidInput("log-log fit needs positive values");
    lx[i] = std::log(x[i]);
    ly[i] = std::log(y[i]);
  }
  return ols_line(lx, ly).slope;
}

}  // namespace dlpt::stats
