#pragma once

// Synthetic and semi-synthetic ground truths with oracle access to outcome
// probabilities, policy values and best levels.

#include "dlpt/core.hpp"
#include "dlpt/nets.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <memory>
#include <span>
#include <variant>
#include <vector>

namespace dlpt {

struct ValueParams {
  double w = 0.5;  // revenue per unit outcome
  double c = 0.1;  // cost per unit treatment

  void validate() const;
};

/// Sigmoid-polynomial truth: theta(x) = bias + linear x + quadratic x^2 (elementwise square).
struct SigmoidPoly {
  Eigen::VectorXd bias;       // K*+1
  Eigen::MatrixXd linear;     // (K*+1) x d
  Eigen::MatrixXd quadratic;  // (K*+1) x d, or empty

  int degree() const noexcept { return static_cast<int>(bias.size()) - 1; }
  Eigen::VectorXd theta(const Eigen::Ref<const Eigen::VectorXd>& x) const;
};

/// Latent alpha sin(beta t) + gamma' x + offset: Hoelder in t but not a polynomial.
struct SmoothNonparam {
  double alpha = 1.0;
  double beta = 1.0;
  Eigen::VectorXd gamma;
  double offset = 0.0;
};

/// Frozen response network used as the semi-synthetic truth.
struct FittedNet {
  std::shared_ptr<const PlainNet> net;
};

class GroundTruth {
 public:
  using Variant = std::variant<SigmoidPoly, SmoothNonparam, FittedNet>;

  GroundTruth(Variant v, std::size_t dim, double t_max = 1.0);

  const Variant& variant() const noexcept { return v_; }
  std::size_t dim() const noexcept { return dim_; }
  double t_max() const noexcept { return t_max_; }
  bool has_theta() const noexcept { return std::holds_alternative<SigmoidPoly>(v_); }
  /// Exact nuisance coefficients; SigmoidPoly only.
  Eigen::MatrixXd theta(const Eigen::MatrixXd& x) const;

  /// Outcome probabilities and their t-derivatives at (x_i, a_i).
  void prob_and_dt(const Eigen::MatrixXd& x, std::span<const double> a, std::span<double> p,
                   std::span<double> dp) const;
  Eigen::VectorXd prob(const Eigen::MatrixXd& x, std::span<const double> a) const;

 private:
  Variant v_;
  std::size_t dim_;
  double t_max_;
};

/// Probability in (0, 1); throws when t is outside [0, t_max].
double outcome_prob(const GroundTruth& gt, const Eigen::VectorXd& x, double t);

/// Coordinates with a nonempty value list are drawn uniformly from it, the
/// rest uniformly on [-1, 1].
struct CovariateLaw {
  std::size_t d = 1;
  std::vector<std::vector<double>> discrete_values;

  static CovariateLaw uniform(std::size_t d) { return CovariateLaw{d, {}}; }
  Eigen::MatrixXd draw(std::size_t n, std::uint64_t seed) const;
};

/// Arms independent of x, y ~ Bernoulli(outcome_prob). Sample i uses its own
/// counter-based stream, so the result does not depend on thread scheduling.
Dataset generate(const GroundTruth& gt, std::size_t n, const Design& design, const CovariateLaw& law,
                 std::uint64_t seed);

struct MonteCarloValue {
  double value = 0.0;
  double se = 0.0;
};

/// Mean of w G(x_i, a_i) - c a_i over the covariate columns.
MonteCarloValue true_value(const GroundTruth& gt, const Eigen::MatrixXd& x, std::span<const double> actions,
                           const ValueParams& vp);

struct BestLevel {
  double level = 0.0;
  double value = 0.0;
};

/// Argmax over grid of w G(x, a) - c a; ties go to the smaller level.
BestLevel true_best_level(const GroundTruth& gt, const Eigen::VectorXd& x, std::span<const double> grid,
                          const ValueParams& vp);

/// Population ATE mu(t0) = E[G(x, t0) - G(x, 0)] over the covariate columns.
MonteCarloValue true_ate(const GroundTruth& gt, const Eigen::MatrixXd& x, double level);

/// Default benchmark truths used by the experiment suite (d >= 3).
GroundTruth default_sigmoid_poly(std::size_t d = 4);
GroundTruth default_sine_latent(std::size_t d = 4);
/// Exactly degree-1 sigmoid-polynomial truth (well-specified control).
GroundTruth default_linear_poly(std::size_t d = 4);

}  // namespace dlpt
