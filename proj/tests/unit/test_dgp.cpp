#include "dlpt/dgp.hpp"
#include "dlpt/error.hpp"
#include "dlpt/mlp.hpp"
#include "dlpt/rng.hpp"

#include <doctest.h>

#include <cmath>
#include <vector>

using namespace dlpt;

namespace {

GroundTruth constant_theta(Eigen::VectorXd theta, std::size_t d = 2) {
  SigmoidPoly sp;
  sp.bias = std::move(theta);
  sp.linear = Eigen::MatrixXd::Zero(sp.bias.size(), static_cast<Eigen::Index>(d));
  return GroundTruth(sp, d);
}

// One-coordinate truth whose constant-policy value has a closed form:
// E_x sigmoid(b + s x) over x ~ U[-1, 1] = (softplus(b + s) - softplus(b - s)) / (2 s).
GroundTruth one_dim(double b0, double b1, double slope) {
  SigmoidPoly sp;
  sp.bias = Eigen::Vector2d(b0, b1);
  sp.linear = Eigen::MatrixXd::Zero(2, 1);
  sp.linear(0, 0) = slope;
  return GroundTruth(sp, 1);
}

double exact_constant_value(double b0, double b1, double slope, double a, const ValueParams& vp) {
  const double b = b0 + b1 * a;
  return vp.w * (softplus(b + slope) - softplus(b - slope)) / (2 * slope) - vp.c * a;
}

}  // namespace

TEST_CASE("outcome_prob examples") {
  const GroundTruth zero = constant_theta(Eigen::Vector4d::Zero());
  CHECK(outcome_prob(zero, Eigen::Vector2d(0.3, -0.9), 0.7) == 0.5);
  const GroundTruth unit = constant_theta(Eigen::Vector4d(0, 1, 0, 0));
  CHECK(outcome_prob(unit, Eigen::Vector2d(0.1, 0.2), 1.0) == doctest::Approx(0.7310585786300049).epsilon(1e-14));

  SmoothNonparam sn;
  sn.alpha = 1.0;
  sn.beta = 3.0;
  sn.gamma = Eigen::Vector2d(1.0, 0.0);
  const GroundTruth sine(sn, 2);
  CHECK(outcome_prob(sine, Eigen::Vector2d(0.0, 0.4), 0.0) == 0.5);
  CHECK(outcome_prob(sine, Eigen::Vector2d(0.2, 0.4), 0.5) ==
        doctest::Approx(1.0 / (1.0 + std::exp(-(std::sin(1.5) + 0.2)))));
}

TEST_CASE("outcome_prob rejects treatments out of range") {
  const GroundTruth zero = constant_theta(Eigen::Vector2d::Zero());
  CHECK_THROWS_AS(outcome_prob(zero, Eigen::Vector2d::Zero(), 1.5), InvalidInput);
  CHECK_THROWS_AS(outcome_prob(zero, Eigen::Vector2d::Zero(), -0.1), InvalidInput);
}

TEST_CASE("outcome_prob saturation is an error, never clipped") {
  const GroundTruth huge = constant_theta(Eigen::Vector2d(800.0, 0.0));
  CHECK_THROWS_AS(outcome_prob(huge, Eigen::Vector2d::Zero(), 0.5), NumericalError);
}

TEST_CASE("outcome_prob t-derivative matches central differences") {
  for (const auto& gt : {default_sigmoid_poly(4), default_sine_latent(4), default_linear_poly(4)}) {
    const Eigen::MatrixXd x = CovariateLaw::uniform(4).draw(20, 9);
    std::vector<double> a(20), ap(20), am(20), p(20), dp(20), pp(20), pm(20), tmp(20);
    for (int i = 0; i < 20; ++i) {
      a[i] = 0.05 + 0.045 * i;
      ap[i] = a[i] + 1e-6;
      am[i] = a[i] - 1e-6;
    }
    gt.prob_and_dt(x, a, p, dp);
    gt.prob_and_dt(x, ap, pp, tmp);
    gt.prob_and_dt(x, am, pm, tmp);
    for (int i = 0; i < 20; ++i) CHECK(dp[i] == doctest::Approx((pp[i] - pm[i]) / 2e-6).epsilon(1e-6));
  }
}

TEST_CASE("generate with a single-level design") {
  const Design one{{0.3}, {1.0}, 1.0};
  const Dataset ds = generate(default_sigmoid_poly(4), 500, one, CovariateLaw::uniform(4), 1);
  CHECK((ds.t().array() == 0.3).all());
}

TEST_CASE("generate: flat truth gives mean outcome one half") {
  const GroundTruth zero = constant_theta(Eigen::Vector2d::Zero());
  const Dataset ds = generate(zero, 100000, Design::uniform({0.0, 0.5, 1.0}), CovariateLaw::uniform(2), 4);
  CHECK(std::abs(ds.y().mean() - 0.5) <= 0.01);
}

TEST_CASE("generate: arm frequencies match the design") {
  const Design design{{0.0, 0.178, 0.358, 0.538, 0.718}, {0.1, 0.2, 0.3, 0.15, 0.25}, 1.0};
  const std::size_t n = 100000;
  const Dataset ds = generate(default_sigmoid_poly(4), n, design, CovariateLaw::uniform(4), 12);
  std::vector<double> count(design.m(), 0.0);
  for (std::size_t i = 0; i < n; ++i) count[ds.arm(i)] += 1.0;
  for (std::size_t j = 0; j < design.m(); ++j) {
    const double p = design.probs[j];
    CHECK(std::abs(count[j] / n - p) <= 3 * std::sqrt(p * (1 - p) / n));
  }
}

TEST_CASE("generate is reproducible and seed sensitive") {
  const auto gt = default_sine_latent(4);
  const Design design = Design::uniform({0.0, 0.5, 1.0});
  const Dataset a = generate(gt, 2000, design, CovariateLaw::uniform(4), 77);
  const Dataset b = generate(gt, 2000, design, CovariateLaw::uniform(4), 77);
  const Dataset c = generate(gt, 2000, design, CovariateLaw::uniform(4), 78);
  CHECK(a.x() == b.x());
  CHECK(a.t() == b.t());
  CHECK(a.y() == b.y());
  CHECK(a.x() != c.x());
}

TEST_CASE("covariate law supports discrete coordinates") {
  CovariateLaw law{2, {{0.0, 1.0}, {}}};
  const Eigen::MatrixXd x = law.draw(1000, 3);
  for (Eigen::Index i = 0; i < x.cols(); ++i) {
    CHECK((x(0, i) == 0.0 || x(0, i) == 1.0));
    CHECK(std::abs(x(1, i)) <= 1.0);
  }
}

TEST_CASE("true_value closed-form examples") {
  const GroundTruth zero = constant_theta(Eigen::Vector4d::Zero());
  const Eigen::MatrixXd x = CovariateLaw::uniform(2).draw(100, 1);
  const ValueParams vp{0.5, 0.1};
  const std::vector<double> a0(100, 0.0), a1(100, 0.718);
  CHECK(true_value(zero, x, a0, vp).value == doctest::Approx(0.25));
  CHECK(true_value(zero, x, a1, vp).value == doctest::Approx(0.1782));
  CHECK(true_value(zero, x, a1, vp).se == doctest::Approx(0.0));
}

TEST_CASE("true_value Monte Carlo agrees with the exact integral within 4 SE") {
  const double b0 = -0.3, b1 = 1.2, slope = 1.7;
  const GroundTruth gt = one_dim(b0, b1, slope);
  const ValueParams vp{0.5, 0.1};
  const double a = 0.4;
  const double exact = exact_constant_value(b0, b1, slope, a, vp);
  int inside = 0;
  const int seeds = 200;
  for (int s = 0; s < seeds; ++s) {
    const Eigen::MatrixXd x = CovariateLaw::uniform(1).draw(5000, 1000 + s);
    const std::vector<double> actions(5000, a);
    const MonteCarloValue mc = true_value(gt, x, actions, vp);
    if (std::abs(mc.value - exact) <= 4 * mc.se) ++inside;
  }
  CHECK(inside >= 198);
}

TEST_CASE("true_best_level examples") {
  const GroundTruth zero = constant_theta(Eigen::Vector2d::Zero());
  const std::vector<double> grid{0.0, 0.25, 0.5, 0.75, 1.0};
  const auto best = true_best_level(zero, Eigen::Vector2d::Zero(), grid, ValueParams{0.5, 0.1});
  CHECK(best.level == 0.0);
  CHECK(best.value == doctest::Approx(0.25));

  const std::vector<double> single{0.6};
  CHECK(true_best_level(default_sigmoid_poly(4), Eigen::Vector4d::Zero(), single, ValueParams{}).level == 0.6);

  // w = c = 0 makes every level tie; the smallest wins.
  const std::vector<double> rev{0.75, 0.5, 0.25};
  CHECK(true_best_level(default_sigmoid_poly(4), Eigen::Vector4d::Zero(), rev, ValueParams{0.0, 0.0}).level == 0.25);
}

TEST_CASE("true_best_level agrees with an independent scan on 5-point grids") {
  const auto gt = default_sigmoid_poly(4);
  const ValueParams vp{0.5, 0.1};
  Rng rng(8);
  const Eigen::MatrixXd x = CovariateLaw::uniform(4).draw(200, 2);
  for (Eigen::Index i = 0; i < x.cols(); ++i) {
    std::vector<double> grid(5);
    for (auto& g : grid) g = rng.uniform();
    // Independent scan straight from the closed-form coefficients.
    const auto& sp = std::get<SigmoidPoly>(gt.variant());
    const Eigen::VectorXd th = sp.theta(x.col(i));
    double best_a = 0.0, best_v = -1e300;
    for (double a : grid) {
      double z = 0.0;
      for (int k = 0; k <= sp.degree(); ++k) z += th[k] * std::pow(a, k);
      const double v = vp.w / (1.0 + std::exp(-z)) - vp.c * a;
      if (v > best_v || (v == best_v && a < best_a)) {
        best_v = v;
        best_a = a;
      }
    }
    const auto got = true_best_level(gt, x.col(i), grid, vp);
    CHECK(got.level == best_a);
    CHECK(got.value == doctest::Approx(best_v).epsilon(1e-12));
  }
}

TEST_CASE("true_ate of a flat truth is zero") {
  const GroundTruth zero = constant_theta(Eigen::Vector2d::Zero());
  const Eigen::MatrixXd x = CovariateLaw::uniform(2).draw(50, 1);
  CHECK(true_ate(zero, x, 0.7).value == 0.0);
  CHECK(true_ate(default_sigmoid_poly(4), CovariateLaw::uniform(4).draw(50, 2), 0.0).value == 0.0);
}

TEST_CASE("ground truth constructor checks shapes") {
  SigmoidPoly sp;
  sp.bias = Eigen::Vector2d::Zero();
  sp.linear = Eigen::MatrixXd::Zero(2, 3);
  CHECK_THROWS_AS(GroundTruth(sp, 2), InvalidInput);
  SmoothNonparam sn;
  sn.gamma = Eigen::Vector3d::Zero();
  CHECK_THROWS_AS(GroundTruth(sn, 2), InvalidInput);
  CHECK_THROWS_AS(GroundTruth(FittedNet{}, 2), InvalidInput);
}
