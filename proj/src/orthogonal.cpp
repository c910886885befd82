#include "dlpt/orthogonal.hpp"

#include "dlpt/error.hpp"
#include "dlpt/kernels.hpp"
#include "dlpt/mlp.hpp"
#include "dlpt/rng.hpp"
#include "dlpt/stats.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace dlpt {

void ScoreContext::validate() const {
  design.validate();
  vp.validate();
  if (K < 0 || K > kernels::kMaxDegree) {
    throw InvalidInput("polynomial degree K must be in [0, " + std::to_string(kernels::kMaxDegree) + "]");
  }
  if (design.m() < static_cast<std::size_t>(K) + 1) {
    throw IdentifiabilityError("design has " + std::to_string(design.m()) + " levels but K = " + std::to_string(K) +
                               " needs at least " + std::to_string(K + 1));
  }
  if (!(ridge >= 0.0 && ridge <= 1e-3)) throw InvalidInput("ridge must be in [0, 1e-3]");
}

Eigen::VectorXd grad_G_theta(const Eigen::VectorXd& theta, double t) {
  const int K = static_cast<int>(theta.size()) - 1;
  const double g = sigmoid(theta.dot(poly_features(t, K)));
  return g * (1.0 - g) * poly_features(t, K);
}

Eigen::MatrixXd lambda_matrix(const Eigen::VectorXd& theta, const ScoreContext& ctx) {
  ctx.validate();
  if (theta.size() != ctx.K + 1) throw InvalidInput("theta must have K+1 entries");
  kernels::SmallMatrix lambda;
  kernels::lambda_into(theta.data(), ctx.K, ctx, lambda);
  kernels::SmallVector probe = kernels::SmallVector::Zero(ctx.K + 1);
  if (!kernels::lambda_solve(lambda, ctx.ridge, probe)) {
    throw SingularityError("Lambda(x) condition number exceeds 1e12");
  }
  return lambda;
}

Eigen::VectorXd ell_theta(double y, double t, const Eigen::VectorXd& theta, LossKind kind) {
  const int K = static_cast<int>(theta.size()) - 1;
  const Eigen::VectorXd T = poly_features(t, K);
  const double g = sigmoid(theta.dot(T));
  if (kind == LossKind::CrossEntropy) return (g - y) * T;
  return (g - y) * g * (1.0 - g) * T;
}

Eigen::VectorXd correction_vector(double y, double t, const Eigen::VectorXd& theta, const ScoreContext& ctx) {
  ctx.validate();
  if (theta.size() != ctx.K + 1) throw InvalidInput("theta must have K+1 entries");
  Eigen::VectorXd v(ctx.K + 1);
  if (!kernels::correction(theta.data(), ctx.K, t, y, ctx, v.data())) {
    throw SingularityError("Lambda(x) condition number exceeds 1e12");
  }
  return v;
}

namespace {

void check_observation(const Sample& s, const ScoreContext& ctx) {
  if (!ctx.design.level_index(s.t)) throw InvalidInput("sample treatment is not a design level");
  if (!(s.y >= 0.0 && s.y <= 1.0)) throw InvalidInput("outcome must be in [0, 1]");
}

void check_action(double a, double t_max) {
  if (!(a >= 0.0 && a <= t_max)) throw InvalidInput("action must be in [0, t_max]");
}

ScoreTable single_table(const Sample& s, const Eigen::VectorXd& theta, const ScoreContext& ctx) {
  ScoreTable table;
  table.theta = theta;
  table.correction = correction_vector(s.y, s.t, theta, ctx);
  table.vp = ctx.vp;
  table.t_max = ctx.design.t_max;
  return table;
}

}  // namespace

double score_value(const Sample& s, double a, const Eigen::VectorXd& theta, const ScoreContext& ctx) {
  check_observation(s, ctx);
  check_action(a, ctx.design.t_max);
  return single_table(s, theta, ctx).value(0, a);
}

double score_ate(const Sample& s, double level, const Eigen::VectorXd& theta, const ScoreContext& ctx) {
  check_observation(s, ctx);
  check_action(level, ctx.design.t_max);
  return single_table(s, theta, ctx).ate(0, level);
}

double ScoreTable::plugin_value(std::size_t i, double a) const {
  return kernels::plugin_value(theta.col(i).data(), degree(), vp, a);
}

double ScoreTable::value(std::size_t i, double a) const {
  return kernels::value_score(theta.col(i).data(), correction.col(i).data(), degree(), vp, a);
}

double ScoreTable::value_da(std::size_t i, double a) const {
  return kernels::value_score_da(theta.col(i).data(), correction.col(i).data(), degree(), vp, a);
}

double ScoreTable::ate(std::size_t i, double level) const {
  return kernels::ate_score(theta.col(i).data(), correction.col(i).data(), degree(), level);
}

ScoreTable build_score_table(const Dataset& ds, const Eigen::MatrixXd& theta, const ScoreContext& ctx) {
  ctx.validate();
  if (ds.empty()) throw InvalidInput("evaluation set is empty");
  if (theta.rows() != ctx.K + 1 || static_cast<std::size_t>(theta.cols()) != ds.size()) {
    throw InvalidInput("theta must be (K+1) x n");
  }
  for (std::size_t i = 0; i < ds.size(); ++i) {
    if (!ctx.design.level_index(ds.t()[i])) throw InvalidInput("sample treatment is not a level of the score design");
  }
  ScoreTable table;
  table.theta = theta;
  table.vp = ctx.vp;
  table.t_max = ctx.design.t_max;
  const auto bad = kernels::corrections_parallel(theta, ds.t(), ds.y(), ctx, table.correction);
  if (bad >= 0) throw SingularityError("Lambda(x) is singular at sample " + std::to_string(bad));
  return table;
}

ScoreTable build_score_table(const Dataset& ds, const StructuredNet& net, const ScoreContext& ctx) {
  if (net.degree() != ctx.K) throw InvalidInput("net degree does not match the score context");
  return build_score_table(ds, net.theta(ds.x()), ctx);
}

double ValueEstimate::standard_error() const {
  return n_eval == 0 ? 0.0 : std::sqrt(variance / static_cast<double>(n_eval));
}

ValueEstimate summarize_scores(std::span<const double> scores, double confidence, std::string target) {
  if (scores.empty()) throw InvalidInput("evaluation set is empty");
  for (double s : scores) {
    if (!std::isfinite(s)) throw NumericalError("non-finite score");
  }
  ValueEstimate e;
  e.target = std::move(target);
  e.point = stats::mean(scores);
  e.variance = stats::population_variance(scores);
  e.n_eval = scores.size();
  e.confidence = confidence;
  const double half = stats::two_sided_z(confidence) * e.standard_error();
  e.ci_low = e.point - half;
  e.ci_high = e.point + half;
  return e;
}

std::vector<double> value_scores(const ScoreTable& table, std::span<const double> actions) {
  if (actions.size() != table.size()) throw InvalidInput("one action per evaluation sample is required");
  for (double a : actions) check_action(a, table.t_max);
  std::vector<double> out(table.size());
  kernels::value_scores_parallel(table, actions, out);
  return out;
}

std::vector<double> ate_scores(const ScoreTable& table, double level) {
  check_action(level, table.t_max);
  std::vector<double> out(table.size());
  const auto n = static_cast<std::ptrdiff_t>(table.size());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) out[i] = table.ate(i, level);
  return out;
}

namespace {
std::string format_level(double level) {
  std::ostringstream os;
  os.precision(17);
  os << level;
  return os.str();
}
}  // namespace

ValueEstimate estimate_value(const ScoreTable& table, std::span<const double> actions, double confidence) {
  return summarize_scores(value_scores(table, actions), confidence, "value");
}

ValueEstimate estimate_value(const Dataset& eval, const Policy& policy, const StructuredNet& net,
                             const ScoreContext& ctx, double confidence) {
  const ScoreTable table = build_score_table(eval, net, ctx);
  const std::vector<double> actions = apply_all(policy, eval.x());
  return summarize_scores(value_scores(table, actions), confidence, "value:" + policy_class_name(policy));
}

ValueEstimate estimate_ate(const ScoreTable& table, double level, double confidence) {
  return summarize_scores(ate_scores(table, level), confidence, "ate:" + format_level(level));
}

ValueEstimate estimate_ate(const Dataset& eval, double level, const StructuredNet& net, const ScoreContext& ctx,
                           double confidence) {
  return estimate_ate(build_score_table(eval, net, ctx), level, confidence);
}

std::vector<double> default_probe_epsilons() {
  std::vector<double> eps;
  for (int k = 1; k <= 10; ++k) eps.push_back(0.02 * k);
  return eps;
}

namespace {

struct ProbeMeans {
  double orthogonal = 0.0;
  double plugin = 0.0;
};

ProbeMeans probe_means(const Dataset& eval, const ProbeTarget& target, const Eigen::MatrixXd& theta,
                       const ScoreContext& ctx) {
  const auto n = static_cast<std::ptrdiff_t>(eval.size());
  const int K = ctx.K;
  const bool conditional = target.level_probs.size() > 0;
  std::vector<double> orth(n), plug(n);
  std::ptrdiff_t first_bad = n;
#pragma omp parallel for schedule(static) reduction(min : first_bad)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    double v[kernels::kMaxDegree + 1];
    const double* th = theta.col(i).data();
    const bool ok = conditional
                        ? kernels::conditional_correction(th, K, target.level_probs.col(i).data(), ctx, v)
                        : kernels::correction(th, K, eval.t()[i], eval.y()[i], ctx, v);
    if (!ok) {
      first_bad = std::min(first_bad, i);
      continue;
    }
    if (target.ate) {
      plug[i] = kernels::plugin_ate(th, K, target.level);
      orth[i] = kernels::ate_score(th, v, K, target.level);
    } else {
      plug[i] = kernels::plugin_value(th, K, ctx.vp, target.actions[i]);
      orth[i] = kernels::value_score(th, v, K, ctx.vp, target.actions[i]);
    }
  }
  if (first_bad < n) throw SingularityError("Lambda(x) is singular at sample " + std::to_string(first_bad));
  return {stats::mean(orth), stats::mean(plug)};
}

}  // namespace

ProbeResult orthogonality_probe(const Dataset& eval, const ProbeTarget& target, const Eigen::MatrixXd& theta_star,
                                const ScoreContext& ctx, std::span<const double> epsilons, int directions,
                                std::uint64_t seed) {
  ctx.validate();
  if (eval.empty()) throw InvalidInput("evaluation set is empty");
  if (directions < 1) throw InvalidInput("at least one direction is required");
  if (theta_star.rows() != ctx.K + 1 || static_cast<std::size_t>(theta_star.cols()) != eval.size()) {
    throw InvalidInput("theta* must be (K+1) x n");
  }
  if (!target.ate && target.actions.size() != eval.size()) throw InvalidInput("one action per sample is required");
  if (target.level_probs.size() > 0 &&
      (target.level_probs.rows() != static_cast<Eigen::Index>(ctx.design.m()) ||
       target.level_probs.cols() != theta_star.cols())) {
    throw InvalidInput("level_probs must be m x n");
  }
  const ProbeMeans base = probe_means(eval, target, theta_star, ctx);

  ProbeResult result;
  for (double eps : epsilons) result.rows.push_back({eps, 0.0, 0.0});
  for (int r = 0; r < directions; ++r) {
    Rng rng(child_seed(child_seed(seed, "probe-direction"), static_cast<std::uint64_t>(r)));
    Eigen::VectorXd u(ctx.K + 1);
    for (auto& e : u) e = rng.normal();
    u.normalize();
    for (auto& row : result.rows) {
      if (row.epsilon == 0.0) continue;
      const Eigen::MatrixXd theta = theta_star.colwise() + row.epsilon * u;
      const ProbeMeans m = probe_means(eval, target, theta, ctx);
      row.orthogonal_shift += std::abs(m.orthogonal - base.orthogonal) / directions;
      row.plugin_shift += std::abs(m.plugin - base.plugin) / directions;
    }
  }
  std::vector<double> e, so, sp;
  for (const auto& row : result.rows) {
    if (row.epsilon > 0.0 && row.orthogonal_shift > 0.0 && row.plugin_shift > 0.0) {
      e.push_back(row.epsilon);
      so.push_back(row.orthogonal_shift);
      sp.push_back(row.plugin_shift);
    }
  }
  if (e.size() >= 2) {
    result.orthogonal_slope = stats::log_log_slope(e, so);
    result.plugin_slope = stats::log_log_slope(e, sp);
  }
  return result;
}

}  // namespace dlpt
