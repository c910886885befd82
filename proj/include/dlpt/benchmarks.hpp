#pragma once

// Comparison methods: linear regression (LR), logistic regression (LogR), logit
// choice with covariate-treatment interactions (LCM), an unstructured response
// net (PDL) and per-level empirical means (UNI). Each induces plug-in ATEs and
// plug-in policies.

#include "dlpt/core.hpp"
#include "dlpt/dgp.hpp"
#include "dlpt/learners.hpp"
#include "dlpt/nets.hpp"

#include <memory>
#include <span>
#include <string>
#include <variant>
#include <vector>

namespace dlpt {

enum class BenchmarkKind { LinearReg, LogisticReg, LogitChoice, PlainNetwork, Uniform };

std::string to_string(BenchmarkKind kind);
BenchmarkKind benchmark_kind_from_string(const std::string& s);

struct FitDiagnostics {
  int iterations = 0;
  double gradient_norm = 0.0;
  bool converged = true;  // false when the iteration cap was hit
};

/// y = coef' (1, x, t).
struct LinearRegModel {
  Eigen::VectorXd coef;
};

/// P(y = 1) = sigmoid(coef' (1, x, t)).
struct LogisticRegModel {
  Eigen::VectorXd coef;
  FitDiagnostics diagnostics;
};

/// P(y = 1) = sigmoid(alpha' (1, x) + beta' (1, x) t): a per-coordinate
/// interaction plus a main treatment effect through the constant.
struct LogitChoiceModel {
  Eigen::VectorXd alpha;
  Eigen::VectorXd beta;
  FitDiagnostics diagnostics;
};

struct PlainNetModel {
  std::shared_ptr<const PlainNet> net;
};

struct UniformModel {
  std::vector<double> levels;
  std::vector<double> means;
  std::vector<std::size_t> counts;

  /// w mean_j - c level_j.
  std::vector<double> level_values(const ValueParams& vp) const;
  /// Level with the highest value; ties go to the smaller level.
  double best_level(const ValueParams& vp) const;
};

struct ResponseModel {
  std::variant<LinearRegModel, LogisticRegModel, LogitChoiceModel, PlainNetModel, UniformModel> m;

  BenchmarkKind kind() const noexcept { return static_cast<BenchmarkKind>(m.index()); }
};

struct BenchmarkConfig {
  TrainConfig train;                   // PDL only
  std::vector<int> hidden = {64, 32};  // PDL only
  bool standardize = false;            // PDL only
  int max_iterations = 100;            // LogR / LCM
  double tolerance = 1e-6;             // gradient norm
  std::uint64_t seed = 0;
};

ResponseModel fit(BenchmarkKind kind, const Dataset& train, const BenchmarkConfig& cfg);

/// Predicted outcomes at (x_i, t_i). Uniform throws at a non-design level.
Eigen::VectorXd predict(const ResponseModel& model, const Eigen::MatrixXd& x, std::span<const double> t);
double predict(const ResponseModel& model, const Eigen::VectorXd& x, double t);
/// d predict / d t; Uniform has none and throws.
Eigen::VectorXd dpredict_dt(const ResponseModel& model, const Eigen::MatrixXd& x, std::span<const double> t);

/// Mean over covariate columns of predict(x, level) - predict(x, 0).
double plugin_ate(const ResponseModel& model, const Eigen::MatrixXd& x, double level);

/// Per-sample argmax of w predict(x, a) - c a (UNI: its single global argmax).
std::vector<double> plugin_actions(const ResponseModel& model, const Eigen::MatrixXd& x,
                                   std::span<const double> candidates, const ValueParams& vp, double t_max);
Policy plugin_policy(const ResponseModel& model, const Eigen::MatrixXd& x, std::span<const double> candidates,
                     const ValueParams& vp, double t_max);

/// w predict(x_i, a) - c a as an objective for the gradient learners.
class ModelSurface final : public ValueSurface {
 public:
  ModelSurface(const ResponseModel& model, const Eigen::MatrixXd& x, ValueParams vp, double t_max)
      : model_(model), x_(x), vp_(vp), t_max_(t_max) {}
  std::size_t size() const override { return static_cast<std::size_t>(x_.cols()); }
  double t_max() const override { return t_max_; }
  void evaluate(std::span<const std::size_t> idx, std::span<const double> a, std::span<double> value,
                std::span<double> deriv) const override;

 private:
  const ResponseModel& model_;
  const Eigen::MatrixXd& x_;
  ValueParams vp_;
  double t_max_;
};

/// Minimizes the mean logistic loss over the rows of features by damped Newton
/// steps with backtracking. Exposed for tests.
Eigen::VectorXd fit_logistic(const Eigen::MatrixXd& features, const Eigen::VectorXd& y, int max_iterations,
                             double tolerance, FitDiagnostics& diag);

}  // namespace dlpt
