#pragma once

// Per-sample scoring kernels. Each has a serial reference and an OpenMP version;
// both call the same per-sample code, so their results are bitwise identical.

#include "dlpt/mlp.hpp"
#include "dlpt/orthogonal.hpp"

#include <cstddef>
#include <span>

namespace dlpt::kernels {

/// Largest supported polynomial degree (keeps the small matrices on the stack).
inline constexpr int kMaxDegree = 7;

using SmallMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, 0, kMaxDegree + 1, kMaxDegree + 1>;
using SmallVector = Eigen::Matrix<double, Eigen::Dynamic, 1, 0, kMaxDegree + 1, 1>;

/// sum_k theta[k] t^k.
inline double poly_eval(const double* theta, int K, double t) noexcept {
  double z = theta[K];
  for (int k = K - 1; k >= 0; --k) z = z * t + theta[k];
  return z;
}

/// sum_k k theta[k] t^(k-1).
inline double poly_eval_dt(const double* theta, int K, double t) noexcept {
  double z = 0.0;
  for (int k = K; k >= 1; --k) z = z * t + k * theta[k];
  return z;
}

// Scores from raw theta and correction vectors v = Lambda^-1 ell_theta.

inline double plugin_value(const double* theta, int K, const ValueParams& vp, double a) noexcept {
  return vp.w * sigmoid(poly_eval(theta, K, a)) - vp.c * a;
}

inline double value_score(const double* theta, const double* v, int K, const ValueParams& vp, double a) noexcept {
  const double g = sigmoid(poly_eval(theta, K, a));
  return vp.w * g - vp.c * a - vp.w * g * (1.0 - g) * poly_eval(v, K, a);
}

inline double value_score_da(const double* theta, const double* v, int K, const ValueParams& vp,
                             double a) noexcept {
  const double g = sigmoid(poly_eval(theta, K, a));
  const double gg = g * (1.0 - g);
  const double dz = poly_eval_dt(theta, K, a);
  const double s = poly_eval(v, K, a);
  const double ds = poly_eval_dt(v, K, a);
  return vp.w * gg * dz - vp.c - vp.w * (gg * (1.0 - 2.0 * g) * dz * s + gg * ds);
}

inline double plugin_ate(const double* theta, int K, double level) noexcept {
  return sigmoid(poly_eval(theta, K, level)) - sigmoid(theta[0]);
}

inline double ate_score(const double* theta, const double* v, int K, double level) noexcept {
  const double g1 = sigmoid(poly_eval(theta, K, level));
  const double g0 = sigmoid(theta[0]);
  const double c1 = g1 * (1.0 - g1) * poly_eval(v, K, level);
  const double c0 = g0 * (1.0 - g0) * v[0];
  return g1 - g0 - (c1 - c0);
}

/// Lambda(theta) without ridge.
void lambda_into(const double* theta, int K, const ScoreContext& ctx, SmallMatrix& out);

/// Solves (Lambda + ridge I) v = rhs in place; false when the condition number
/// exceeds kMaxLambdaCondition.
bool lambda_solve(const SmallMatrix& lambda, double ridge, SmallVector& rhs);

/// Lambda^-1 ell_theta for one observation (y, t).
bool correction(const double* theta, int K, double t, double y, const ScoreContext& ctx, double* out);

/// Lambda^-1 E[ell_theta | x], where level_probs[j] is the outcome probability at level j.
bool conditional_correction(const double* theta, int K, const double* level_probs, const ScoreContext& ctx,
                            double* out);

/// Fills out ((K+1) x n) with correction vectors. Returns the first singular
/// sample index, or -1.
std::ptrdiff_t corrections_serial(const Eigen::MatrixXd& theta, const Eigen::VectorXd& t, const Eigen::VectorXd& y,
                                  const ScoreContext& ctx, Eigen::MatrixXd& out);
std::ptrdiff_t corrections_parallel(const Eigen::MatrixXd& theta, const Eigen::VectorXd& t,
                                    const Eigen::VectorXd& y, const ScoreContext& ctx, Eigen::MatrixXd& out);

void value_scores_serial(const ScoreTable& table, std::span<const double> actions, std::span<double> out);
void value_scores_parallel(const ScoreTable& table, std::span<const double> actions, std::span<double> out);

/// Per-sample index of the best candidate by orthogonal score; ties go to the
/// earlier candidate.
void argmax_serial(const ScoreTable& table, std::span<const double> candidates, std::span<std::size_t> out);
void argmax_parallel(const ScoreTable& table, std::span<const double> candidates, std::span<std::size_t> out);

}  // namespace dlpt::kernels
