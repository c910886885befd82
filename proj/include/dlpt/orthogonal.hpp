#pragma once

// Closed-form Lambda(x), orthogonal scores for policy values and ATEs, and the
// resulting estimators with normal confidence intervals.

#include "dlpt/core.hpp"
#include "dlpt/dgp.hpp"
#include "dlpt/nets.hpp"
#include "dlpt/policy.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace dlpt {

struct ScoreContext {
  Design design;
  LossKind loss = LossKind::CrossEntropy;
  ValueParams vp;
  int K = 3;
  double ridge = 1e-8;

  void validate() const;
};

/// Condition number above which Lambda is treated as singular.
inline constexpr double kMaxLambdaCondition = 1e12;

/// G(1 - G) T(t).
Eigen::VectorXd grad_G_theta(const Eigen::VectorXd& theta, double t);
/// Exact sum over design levels: E[G(1-G) T T'] for cross entropy, E[G_theta G_theta'] for squared error.
Eigen::MatrixXd lambda_matrix(const Eigen::VectorXd& theta, const ScoreContext& ctx);
/// Gradient of the per-sample loss in theta.
Eigen::VectorXd ell_theta(double y, double t, const Eigen::VectorXd& theta, LossKind kind);
/// Lambda(theta)^-1 ell_theta for one observation; throws SingularityError.
Eigen::VectorXd correction_vector(double y, double t, const Eigen::VectorXd& theta, const ScoreContext& ctx);

double score_value(const Sample& s, double a, const Eigen::VectorXd& theta, const ScoreContext& ctx);
double score_ate(const Sample& s, double level, const Eigen::VectorXd& theta, const ScoreContext& ctx);

/// Per-sample theta and correction vectors v = Lambda^-1 ell_theta. Neither
/// depends on the action, so one table serves every policy on the same data.
struct ScoreTable {
  Eigen::MatrixXd theta;       // (K+1) x n
  Eigen::MatrixXd correction;  // (K+1) x n
  ValueParams vp;
  double t_max = 1.0;

  std::size_t size() const noexcept { return static_cast<std::size_t>(theta.cols()); }
  int degree() const noexcept { return static_cast<int>(theta.rows()) - 1; }

  double value(std::size_t i, double a) const;
  /// d value / d a.
  double value_da(std::size_t i, double a) const;
  /// w G(theta_i, a) - c a, without correction.
  double plugin_value(std::size_t i, double a) const;
  double ate(std::size_t i, double level) const;
};

ScoreTable build_score_table(const Dataset& ds, const Eigen::MatrixXd& theta, const ScoreContext& ctx);
ScoreTable build_score_table(const Dataset& ds, const StructuredNet& net, const ScoreContext& ctx);

struct ValueEstimate {
  std::string target;
  double point = 0.0;
  double variance = 0.0;
  std::size_t n_eval = 0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  double confidence = 0.95;

  double standard_error() const;
};

/// Mean, mean squared deviation and normal CI of per-sample scores.
ValueEstimate summarize_scores(std::span<const double> scores, double confidence, std::string target);

std::vector<double> value_scores(const ScoreTable& table, std::span<const double> actions);
std::vector<double> ate_scores(const ScoreTable& table, double level);

ValueEstimate estimate_value(const ScoreTable& table, std::span<const double> actions, double confidence = 0.95);
ValueEstimate estimate_value(const Dataset& eval, const Policy& policy, const StructuredNet& net,
                             const ScoreContext& ctx, double confidence = 0.95);
ValueEstimate estimate_ate(const ScoreTable& table, double level, double confidence = 0.95);
ValueEstimate estimate_ate(const Dataset& eval, double level, const StructuredNet& net, const ScoreContext& ctx,
                           double confidence = 0.95);

struct ProbeRow {
  double epsilon = 0.0;
  double orthogonal_shift = 0.0;
  double plugin_shift = 0.0;
};

struct ProbeResult {
  std::vector<ProbeRow> rows;
  double orthogonal_slope = 0.0;
  double plugin_slope = 0.0;
};

/// What the probe scores: a vector of per-sample actions, or an ATE level.
/// When level_probs (m x n true outcome probabilities at each design level) is
/// set, the correction uses E[ell_theta | x] instead of the observed (t, y).
struct ProbeTarget {
  std::vector<double> actions;
  double level = 0.0;
  bool ate = false;
  Eigen::MatrixXd level_probs;
};

/// Perturbs theta* by eps u along random unit directions (Lambda recomputed at the
/// perturbed theta) and reports mean |shift| of the orthogonal and plug-in means.
ProbeResult orthogonality_probe(const Dataset& eval, const ProbeTarget& target, const Eigen::MatrixXd& theta_star,
                                const ScoreContext& ctx, std::span<const double> epsilons, int directions,
                                std::uint64_t seed);

std::vector<double> default_probe_epsilons();

}  // namespace dlpt
