#include "dlpt/kernels.hpp"

#include "dlpt/mlp.hpp"

#include <algorithm>
#include <cmath>

namespace dlpt::kernels {

namespace {

void powers(double t, int K, SmallVector& out) {
  out.resize(K + 1);
  out[0] = 1.0;
  for (int k = 1; k <= K; ++k) out[k] = out[k - 1] * t;
}

}  // namespace

void lambda_into(const double* theta, int K, const ScoreContext& ctx, SmallMatrix& out) {
  out.setZero(K + 1, K + 1);
  SmallVector T;
  for (std::size_t j = 0; j < ctx.design.m(); ++j) {
    const double t = ctx.design.levels[j];
    const double g = sigmoid(poly_eval(theta, K, t));
    powers(t, K, T);
    const double v = g * (1.0 - g);
    const double weight = ctx.loss == LossKind::CrossEntropy ? v : v * v;
    out.noalias() += (ctx.design.probs[j] * weight) * T * T.transpose();
  }
}

bool lambda_solve(const SmallMatrix& lambda, double ridge, SmallVector& rhs) {
  SmallMatrix a = lambda;
  a.diagonal().array() += ridge;
  Eigen::SelfAdjointEigenSolver<SmallMatrix> es(a);
  if (es.info() != Eigen::Success) return false;
  const auto& ev = es.eigenvalues();
  const double lo = ev.minCoeff(), hi = ev.maxCoeff();
  if (!(lo > 0.0) || !(hi <= kMaxLambdaCondition * lo)) return false;
  SmallVector c = es.eigenvectors().transpose() * rhs;
  c.array() /= ev.array();
  rhs = es.eigenvectors() * c;
  return true;
}

bool correction(const double* theta, int K, double t, double y, const ScoreContext& ctx, double* out) {
  SmallMatrix lambda;
  lambda_into(theta, K, ctx, lambda);
  SmallVector v;
  powers(t, K, v);
  const double g = sigmoid(poly_eval(theta, K, t));
  const double scale = ctx.loss == LossKind::CrossEntropy ? (g - y) : (g - y) * g * (1.0 - g);
  v *= scale;
  if (!lambda_solve(lambda, ctx.ridge, v)) return false;
  for (int k = 0; k <= K; ++k) out[k] = v[k];
  return true;
}

bool conditional_correction(const double* theta, int K, const double* level_probs, const ScoreContext& ctx,
                            double* out) {
  SmallMatrix lambda;
  lambda_into(theta, K, ctx, lambda);
  SmallVector v = SmallVector::Zero(K + 1);
  SmallVector T;
  for (std::size_t j = 0; j < ctx.design.m(); ++j) {
    const double t = ctx.design.levels[j];
    const double g = sigmoid(poly_eval(theta, K, t));
    const double r = g - level_probs[j];
    const double scale = ctx.loss == LossKind::CrossEntropy ? r : r * g * (1.0 - g);
    powers(t, K, T);
    v += (ctx.design.probs[j] * scale) * T;
  }
  if (!lambda_solve(lambda, ctx.ridge, v)) return false;
  for (int k = 0; k <= K; ++k) out[k] = v[k];
  return true;
}

std::ptrdiff_t corrections_serial(const Eigen::MatrixXd& theta, const Eigen::VectorXd& t, const Eigen::VectorXd& y,
                                  const ScoreContext& ctx, Eigen::MatrixXd& out) {
  const int K = static_cast<int>(theta.rows()) - 1;
  const auto n = static_cast<std::ptrdiff_t>(theta.cols());
  out.resize(theta.rows(), theta.cols());
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    if (!correction(theta.col(i).data(), K, t[i], y[i], ctx, out.col(i).data())) return i;
  }
  return -1;
}

std::ptrdiff_t corrections_parallel(const Eigen::MatrixXd& theta, const Eigen::VectorXd& t,
                                    const Eigen::VectorXd& y, const ScoreContext& ctx, Eigen::MatrixXd& out) {
  const int K = static_cast<int>(theta.rows()) - 1;
  const auto n = static_cast<std::ptrdiff_t>(theta.cols());
  out.resize(theta.rows(), theta.cols());
  std::ptrdiff_t first = n;
#pragma omp parallel for schedule(static) reduction(min : first)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    if (!correction(theta.col(i).data(), K, t[i], y[i], ctx, out.col(i).data())) first = std::min(first, i);
  }
  return first == n ? -1 : first;
}

void value_scores_serial(const ScoreTable& table, std::span<const double> actions, std::span<double> out) {
  for (std::size_t i = 0; i < table.size(); ++i) out[i] = table.value(i, actions[i]);
}

void value_scores_parallel(const ScoreTable& table, std::span<const double> actions, std::span<double> out) {
  const auto n = static_cast<std::ptrdiff_t>(table.size());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) out[i] = table.value(i, actions[i]);
}

namespace {
std::size_t best_candidate(const ScoreTable& table, std::size_t i, std::span<const double> candidates) {
  std::size_t best = 0;
  double best_value = table.value(i, candidates[0]);
  for (std::size_t j = 1; j < candidates.size(); ++j) {
    const double v = table.value(i, candidates[j]);
    if (v > best_value) {
      best_value = v;
      best = j;
    }
  }
  return best;
}
}  // namespace

void argmax_serial(const ScoreTable& table, std::span<const double> candidates, std::span<std::size_t> out) {
  for (std::size_t i = 0; i < table.size(); ++i) out[i] = best_candidate(table, i, candidates);
}

void argmax_parallel(const ScoreTable& table, std::span<const double> candidates, std::span<std::size_t> out) {
  const auto n = static_cast<std::ptrdiff_t>(table.size());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) out[i] = best_candidate(table, i, candidates);
}

}  // namespace dlpt::kernels
