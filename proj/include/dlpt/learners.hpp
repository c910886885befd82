#pragma once

// Empirical risk minimization over the four policy classes, plus regret and
// in-class oracle optima for synthetic truths.

#include "dlpt/dgp.hpp"
#include "dlpt/orthogonal.hpp"
#include "dlpt/policy.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace dlpt {

/// Per-sample objective a -> S_i(a) whose sample mean is maximized.
class ValueSurface {
 public:
  virtual ~ValueSurface() = default;
  virtual std::size_t size() const = 0;
  virtual double t_max() const = 0;
  /// value[k] = S_idx[k](a[k]); deriv (if nonempty) receives dS/da.
  virtual void evaluate(std::span<const std::size_t> idx, std::span<const double> a, std::span<double> value,
                        std::span<double> deriv) const = 0;

  double value(std::size_t i, double a) const;
  double derivative(std::size_t i, double a) const;
  /// Mean of S_i(a_i) over all samples.
  double mean_value(std::span<const double> actions) const;
};

/// Orthogonal score psi_V.
class OrthogonalSurface final : public ValueSurface {
 public:
  explicit OrthogonalSurface(const ScoreTable& table) : table_(table) {}
  std::size_t size() const override { return table_.size(); }
  double t_max() const override { return table_.t_max; }
  void evaluate(std::span<const std::size_t> idx, std::span<const double> a, std::span<double> value,
                std::span<double> deriv) const override;

 private:
  const ScoreTable& table_;
};

/// Plug-in w G(theta_i, a) - c a without correction.
class PluginThetaSurface final : public ValueSurface {
 public:
  explicit PluginThetaSurface(const ScoreTable& table) : table_(table) {}
  std::size_t size() const override { return table_.size(); }
  double t_max() const override { return table_.t_max; }
  void evaluate(std::span<const std::size_t> idx, std::span<const double> a, std::span<double> value,
                std::span<double> deriv) const override;

 private:
  const ScoreTable& table_;
};

/// True value w p(x_i, a) - c a of a synthetic ground truth.
class TruthSurface final : public ValueSurface {
 public:
  TruthSurface(const GroundTruth& gt, const Eigen::MatrixXd& x, ValueParams vp) : gt_(gt), x_(x), vp_(vp) {}
  std::size_t size() const override { return static_cast<std::size_t>(x_.cols()); }
  double t_max() const override { return gt_.t_max(); }
  void evaluate(std::span<const std::size_t> idx, std::span<const double> a, std::span<double> value,
                std::span<double> deriv) const override;

 private:
  const GroundTruth& gt_;
  const Eigen::MatrixXd& x_;
  ValueParams vp_;
};

/// Sorted, de-duplicated candidate list; throws on an empty list or a value outside [0, t_max].
std::vector<double> candidate_levels(std::span<const double> levels, double t_max);
/// points equally spaced values on [0, t_max].
std::vector<double> uniform_grid(double t_max, int points);

/// Per-sample argmax over candidates; ties go to the smaller level.
std::vector<double> learn_finite_actions(const ValueSurface& surface, std::span<const double> levels);

/// Table keyed by each sample's covariate vector (the first sample wins on duplicates).
Policy table_policy(const Eigen::MatrixXd& x, std::span<const double> actions, double t_max);

Policy learn_finite(const Dataset& eval, const StructuredNet& net, const ScoreContext& ctx,
                    std::span<const double> levels);
Policy learn_grid(const Dataset& eval, const StructuredNet& net, const ScoreContext& ctx, int points = 101);

struct PolicyLearnConfig {
  double learning_rate = 1e-3;
  int batch_size = 128;
  int max_epochs = 200;
  double validation_fraction = 0.1;
  int patience = 5;
  int restarts = 5;  // restart 0 starts from the best constant
  std::vector<int> hidden = {10, 10, 10};
  int constant_grid = 101;
  /// Pick the final candidate by the holdout objective instead of the full one.
  bool select_on_holdout = true;
  std::uint64_t seed = 0;

  void validate() const;
};

struct LearnResult {
  Policy policy;
  double objective = 0.0;               // mean surface value over all samples
  double selection_objective = 0.0;     // the value the candidate was selected on
  std::vector<double> history;          // best selection objective after each candidate; nondecreasing
  std::vector<double> restart_objectives;
  int epochs = 0;                       // total epochs over all restarts
};

/// Mean surface value of a policy and, optionally, its gradient in (alpha, beta).
double linear_objective(const ValueSurface& surface, const Eigen::MatrixXd& x, std::span<const std::size_t> idx,
                        const LinearPolicy& rule, Eigen::VectorXd* grad = nullptr);
/// Mean surface value of a neural policy and, optionally, its gradient in the body parameters.
double neural_objective(const ValueSurface& surface, const Eigen::MatrixXd& x, std::span<const std::size_t> idx,
                        const Mlp& body, Eigen::VectorXd* grad = nullptr);

/// Best constant action on a uniform grid of the given size (ties to the smaller action).
BestLevel best_constant(const ValueSurface& surface, int points);

LearnResult learn_linear(const ValueSurface& surface, const Eigen::MatrixXd& x, const PolicyLearnConfig& cfg);
LearnResult learn_neural(const ValueSurface& surface, const Eigen::MatrixXd& x, const PolicyLearnConfig& cfg);

LearnResult learn_linear(const Dataset& eval, const StructuredNet& net, const ScoreContext& ctx,
                         const PolicyLearnConfig& cfg);
LearnResult learn_neural(const Dataset& eval, const StructuredNet& net, const ScoreContext& ctx,
                         const PolicyLearnConfig& cfg);

struct RegretReport {
  double policy_value = 0.0;
  double optimal_value = 0.0;
  double regret = 0.0;
  std::optional<double> mpr;  // percent; empty when the optimal value is not positive
};

/// 100 regret / optimal value; throws MprUndefined when optimal_value <= 0.
double mean_percentage_regret(double regret, double optimal_value);

RegretReport regret_of_actions(const GroundTruth& gt, const Eigen::MatrixXd& x, std::span<const double> actions,
                               const ValueParams& vp, double optimal_value);
RegretReport regret(const Policy& policy, const GroundTruth& gt, const Eigen::MatrixXd& x, const ValueParams& vp,
                    double optimal_value);

/// In-class optima under the truth.
std::vector<double> oracle_finite_actions(const GroundTruth& gt, const Eigen::MatrixXd& x,
                                          std::span<const double> levels, const ValueParams& vp);
/// Pointwise optimum on a fine grid; stands in for the grid and neural classes.
std::vector<double> oracle_pointwise_actions(const GroundTruth& gt, const Eigen::MatrixXd& x, int points,
                                             const ValueParams& vp);
LearnResult oracle_linear(const GroundTruth& gt, const Eigen::MatrixXd& x, const ValueParams& vp,
                          const PolicyLearnConfig& cfg);

}  // namespace dlpt
