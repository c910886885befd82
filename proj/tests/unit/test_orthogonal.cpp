#include "dlpt/dgp.hpp"
#include "dlpt/error.hpp"
#include "dlpt/orthogonal.hpp"
#include "dlpt/rng.hpp"
#include "dlpt/stats.hpp"

#include <doctest.h>

#include <cmath>
#include <vector>

using namespace dlpt;

namespace {

double G(const Eigen::VectorXd& theta, double t) { return sigmoid(theta.dot(poly_features(t, static_cast<int>(theta.size()) - 1))); }

ScoreContext context(std::vector<double> levels, int K, LossKind loss = LossKind::CrossEntropy) {
  ScoreContext ctx;
  ctx.design = Design::uniform(std::move(levels));
  ctx.K = K;
  ctx.loss = loss;
  return ctx;
}

Eigen::VectorXd random_theta(Rng& rng, int K) {
  Eigen::VectorXd th(K + 1);
  for (auto& v : th) v = rng.uniform(-1.5, 1.5);
  return th;
}

double loss_at(double y, double t, const Eigen::VectorXd& th, LossKind kind) {
  return sample_loss(th.dot(poly_features(t, static_cast<int>(th.size()) - 1)), y, kind);
}

struct Synthetic {
  GroundTruth gt = default_sigmoid_poly(4);
  Dataset ds;
  Eigen::MatrixXd theta;
  ScoreContext ctx;
};

Synthetic synthetic(std::size_t n, std::uint64_t seed) {
  Synthetic s;
  const int K = std::get<SigmoidPoly>(s.gt.variant()).degree();
  s.ctx = context({0.0, 0.178, 0.358, 0.538, 0.718}, K);
  s.ds = generate(s.gt, n, s.ctx.design, CovariateLaw::uniform(4), seed);
  s.theta = s.gt.theta(s.ds.x());
  return s;
}

}  // namespace

TEST_CASE("grad_G_theta examples and finite differences") {
  CHECK(grad_G_theta(Eigen::Vector2d::Zero(), 1.0).isApprox(Eigen::Vector2d(0.25, 0.25)));
  CHECK(grad_G_theta(Eigen::Vector4d(0, 1, 0, 0), 0.0).isApprox(Eigen::Vector4d(0.25, 0, 0, 0)));
  Rng rng(1);
  for (int rep = 0; rep < 20; ++rep) {
    const Eigen::VectorXd th = random_theta(rng, 3);
    const double t = rng.uniform();
    const Eigen::VectorXd g = grad_G_theta(th, t);
    for (int k = 0; k <= 3; ++k) {
      Eigen::VectorXd up = th, down = th;
      up[k] += 1e-6;
      down[k] -= 1e-6;
      CHECK(std::abs(g[k] - (G(up, t) - G(down, t)) / 2e-6) < 1e-6);
    }
  }
}

TEST_CASE("lambda_matrix closed-form examples") {
  const Eigen::MatrixXd L = lambda_matrix(Eigen::Vector2d::Zero(), context({0.0, 1.0}, 1));
  Eigen::Matrix2d expect;
  expect << 0.25, 0.125, 0.125, 0.125;
  CHECK(L.isApprox(expect));
  CHECK(lambda_matrix(Eigen::VectorXd::Zero(1), context({0.4}, 0))(0, 0) == doctest::Approx(0.25));
  // Squared error at G = 1/2: (G(1-G))^2 = 1/16 per term.
  const Eigen::MatrixXd M = lambda_matrix(Eigen::Vector2d::Zero(), context({0.0, 1.0}, 1, LossKind::SquaredError));
  CHECK(M.isApprox(expect / 4.0));
}

TEST_CASE("lambda_matrix matches a Monte Carlo average over arm draws") {
  Rng rng(2);
  for (LossKind kind : {LossKind::CrossEntropy, LossKind::SquaredError}) {
    for (int rep = 0; rep < 3; ++rep) {
      ScoreContext ctx = context({0.0, 0.178, 0.358, 0.538, 0.718}, 3, kind);
      ctx.design.probs = {0.1, 0.3, 0.2, 0.25, 0.15};
      const Eigen::VectorXd th = random_theta(rng, 3);
      const Eigen::MatrixXd exact = lambda_matrix(th, ctx);
      Eigen::MatrixXd mc = Eigen::MatrixXd::Zero(4, 4);
      const int draws = 200000;
      for (int i = 0; i < draws; ++i) {
        const double u = rng.uniform();
        double cum = 0;
        std::size_t j = 0;
        while (j + 1 < ctx.design.m() && u >= (cum += ctx.design.probs[j])) ++j;
        const double t = ctx.design.levels[j];
        const Eigen::VectorXd gth = grad_G_theta(th, t);
        mc += kind == LossKind::CrossEntropy ? Eigen::MatrixXd(gth * poly_features(t, 3).transpose())
                                             : Eigen::MatrixXd(gth * gth.transpose());
      }
      mc /= draws;
      CHECK((mc - exact).cwiseAbs().maxCoeff() < 3e-3);
      CHECK(exact.isApprox(exact.transpose()));
      CHECK(Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(exact).eigenvalues().minCoeff() > 0.0);
    }
  }
}

TEST_CASE("lambda_matrix singularity and identifiability errors") {
  ScoreContext close = context({0.0, 1e-7}, 1);
  close.ridge = 0.0;
  CHECK_THROWS_AS(lambda_matrix(Eigen::Vector2d::Zero(), close), SingularityError);
  CHECK_THROWS_AS(lambda_matrix(Eigen::Vector3d::Zero(), context({0.0, 0.5}, 2)), IdentifiabilityError);
  ScoreContext ridge = context({0.0, 0.5}, 1);
  ridge.ridge = 0.1;
  CHECK_THROWS_AS(ridge.validate(), InvalidInput);
}

TEST_CASE("ell_theta examples and finite differences") {
  const Eigen::Vector2d zero = Eigen::Vector2d::Zero();
  CHECK(ell_theta(1.0, 0.0, zero, LossKind::CrossEntropy).isApprox(Eigen::Vector2d(-0.5, 0.0)));
  Rng rng(3);
  for (LossKind kind : {LossKind::CrossEntropy, LossKind::SquaredError}) {
    for (int rep = 0; rep < 20; ++rep) {
      const Eigen::VectorXd th = random_theta(rng, 3);
      const double t = rng.uniform();
      CHECK(ell_theta(G(th, t), t, th, kind).norm() < 1e-15);
      const double y = rng.bernoulli(0.5) ? 1.0 : 0.0;
      const Eigen::VectorXd g = ell_theta(y, t, th, kind);
      for (int k = 0; k <= 3; ++k) {
        Eigen::VectorXd up = th, down = th;
        up[k] += 1e-6;
        down[k] -= 1e-6;
        CHECK(std::abs(g[k] - (loss_at(y, t, up, kind) - loss_at(y, t, down, kind)) / 2e-6) < 1e-6);
      }
    }
  }
  // Squared error gradient is (G - y) G_theta.
  const Eigen::Vector4d th(0.2, -0.4, 0.3, 0.1);
  CHECK(ell_theta(1.0, 0.5, th, LossKind::SquaredError).isApprox((G(th, 0.5) - 1.0) * grad_G_theta(th, 0.5)));
}

TEST_CASE("score_value examples") {
  const ScoreContext ctx = context({0.0, 0.178, 0.358, 0.538, 0.718}, 3);
  const Eigen::VectorXd zero = Eigen::VectorXd::Zero(4);
  const Sample s{Eigen::Vector2d::Zero(), 0.358, 0.5};
  CHECK(score_value(s, 0.718, zero, ctx) == doctest::Approx(0.1782).epsilon(1e-14));

  Rng rng(4);
  for (LossKind kind : {LossKind::CrossEntropy, LossKind::SquaredError}) {
    ScoreContext c = ctx;
    c.loss = kind;
    for (int rep = 0; rep < 20; ++rep) {
      const Eigen::VectorXd th = random_theta(rng, 3);
      const double t = c.design.levels[rng.below(5)];
      const double a = rng.uniform();
      const Sample zr{Eigen::Vector2d::Zero(), t, G(th, t)};
      CHECK(score_value(zr, a, th, c) == doctest::Approx(c.vp.w * G(th, a) - c.vp.c * a).epsilon(1e-12));
      CHECK(score_ate(zr, 0.5, th, c) == doctest::Approx(G(th, 0.5) - G(th, 0.0)).epsilon(1e-12));
    }
  }
  CHECK_THROWS_AS(score_value(Sample{Eigen::Vector2d::Zero(), 0.3, 1.0}, 0.5, zero, ctx), InvalidInput);
  CHECK_THROWS_AS(score_value(s, 1.5, zero, ctx), InvalidInput);
}

TEST_CASE("score_value equals the closed form with an explicit inverse") {
  const ScoreContext ctx = context({0.0, 0.25, 0.5, 0.75}, 3);
  Rng rng(5);
  for (int rep = 0; rep < 20; ++rep) {
    const Eigen::VectorXd th = random_theta(rng, 3);
    const double t = ctx.design.levels[rng.below(4)];
    const double y = rng.bernoulli(0.4) ? 1.0 : 0.0;
    const double a = rng.uniform();
    Eigen::Matrix4d lam = ctx.ridge * Eigen::Matrix4d::Identity();
    for (double l : ctx.design.levels) lam += 0.25 * grad_G_theta(th, l) * poly_features(l, 3).transpose();
    const Eigen::VectorXd ell = (G(th, t) - y) * poly_features(t, 3);
    const double expect = ctx.vp.w * G(th, a) - ctx.vp.c * a -
                          ctx.vp.w * grad_G_theta(th, a).dot(lam.inverse() * ell);
    CHECK(score_value(Sample{Eigen::Vector2d::Zero(), t, y}, a, th, ctx) == doctest::Approx(expect).epsilon(1e-9));
  }
}

TEST_CASE("score_ate at level zero vanishes") {
  const ScoreContext ctx = context({0.0, 0.5, 1.0}, 2);
  Rng rng(6);
  for (int rep = 0; rep < 10; ++rep) {
    const Eigen::VectorXd th = random_theta(rng, 2);
    CHECK(score_ate(Sample{Eigen::Vector2d::Zero(), 0.5, 1.0}, 0.0, th, ctx) == 0.0);
  }
  CHECK(score_ate(Sample{Eigen::Vector2d::Zero(), 0.5, 0.5}, 1.0, Eigen::Vector3d::Zero(), ctx) == 0.0);
}

TEST_CASE("score table agrees with the single-sample scores") {
  const Synthetic s = synthetic(300, 7);
  const ScoreTable table = build_score_table(s.ds, s.theta, s.ctx);
  for (std::size_t i = 0; i < 300; i += 17) {
    const Sample smp = s.ds.sample(i);
    const Eigen::VectorXd th = s.theta.col(static_cast<Eigen::Index>(i));
    CHECK(table.value(i, 0.42) == doctest::Approx(score_value(smp, 0.42, th, s.ctx)).epsilon(1e-12));
    CHECK(table.ate(i, 0.538) == doctest::Approx(score_ate(smp, 0.538, th, s.ctx)).epsilon(1e-12));
    CHECK(table.plugin_value(i, 0.42) ==
          doctest::Approx(s.ctx.vp.w * G(th, 0.42) - s.ctx.vp.c * 0.42).epsilon(1e-12));
    const double h = 1e-6;
    CHECK(table.value_da(i, 0.42) ==
          doctest::Approx((table.value(i, 0.42 + h) - table.value(i, 0.42 - h)) / (2 * h)).epsilon(1e-5));
  }
  CHECK_THROWS_AS(build_score_table(s.ds, Eigen::MatrixXd::Zero(3, 300), s.ctx), InvalidInput);
  ScoreContext other = s.ctx;
  other.design = Design::uniform({0.0, 0.2, 0.4, 0.6, 0.8});
  CHECK_THROWS_AS(build_score_table(s.ds, s.theta, other), InvalidInput);
}

TEST_CASE("mean scores at the true theta recover the oracle value and ATE") {
  const Synthetic s = synthetic(50000, 8);
  const ScoreTable table = build_score_table(s.ds, s.theta, s.ctx);
  std::vector<double> actions(s.ds.size());
  for (std::size_t i = 0; i < actions.size(); ++i) actions[i] = 0.5 + 0.4 * s.ds.x()(0, static_cast<Eigen::Index>(i));
  const ValueEstimate v = estimate_value(table, actions);
  const double truth = true_value(s.gt, s.ds.x(), actions, s.ctx.vp).value;
  CHECK(std::abs(v.point - truth) <= 4 * v.standard_error());
  const ValueEstimate a = estimate_ate(table, 0.538);
  CHECK(std::abs(a.point - true_ate(s.gt, s.ds.x(), 0.538).value) <= 4 * a.standard_error());
  CHECK(a.target == "ate:0.53800000000000003");
  CHECK(estimate_ate(table, 0.0).point == 0.0);
}

TEST_CASE("estimate summaries") {
  const std::vector<double> same(40, 0.3);
  const ValueEstimate e = summarize_scores(same, 0.95, "value");
  CHECK(e.point == doctest::Approx(0.3));
  CHECK(e.variance == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(e.ci_low == doctest::Approx(0.3));
  CHECK(e.ci_high == doctest::Approx(0.3));

  Rng rng(9);
  std::vector<double> v(250);
  for (auto& x : v) x = rng.normal();
  std::vector<double> v4;
  for (int r = 0; r < 4; ++r) v4.insert(v4.end(), v.begin(), v.end());
  const ValueEstimate one = summarize_scores(v, 0.95, "value");
  const ValueEstimate four = summarize_scores(v4, 0.95, "value");
  CHECK((four.ci_high - four.ci_low) == doctest::Approx((one.ci_high - one.ci_low) / 2).epsilon(1e-9));
  CHECK(one.ci_low <= one.point);
  CHECK(one.point <= one.ci_high);
  CHECK((one.ci_high - one.point) == doctest::Approx(1.959963984540054 * std::sqrt(one.variance / 250)));
  CHECK_THROWS_AS(summarize_scores(std::vector<double>{}, 0.95, "value"), InvalidInput);
}

TEST_CASE("the correction vanishes on zero-residual samples for both losses") {
  for (LossKind kind : {LossKind::CrossEntropy, LossKind::SquaredError}) {
    Synthetic s = synthetic(200, 10);
    s.ctx.loss = kind;
    Eigen::VectorXd y(200);
    for (Eigen::Index i = 0; i < 200; ++i) y[i] = G(s.theta.col(i), s.ds.t()[i]);
    const Dataset zr(s.ds.x(), s.ds.t(), y, s.ds.design());
    const ScoreTable table = build_score_table(zr, s.theta, s.ctx);
    CHECK(table.correction.cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("empirical directional derivative of the mean score vanishes at theta*") {
  const Synthetic s = synthetic(100000, 11);
  std::vector<double> actions(s.ds.size(), 0.358);
  Rng rng(12);
  const double h = 1e-3;
  for (int r = 0; r < 10; ++r) {
    Eigen::VectorXd u(s.ctx.K + 1);
    for (auto& e : u) e = rng.normal();
    u.normalize();
    const ScoreTable up = build_score_table(s.ds, s.theta.colwise() + h * u, s.ctx);
    const ScoreTable down = build_score_table(s.ds, s.theta.colwise() - h * u, s.ctx);
    const double d = (estimate_value(up, actions).point - estimate_value(down, actions).point) / (2 * h);
    CHECK(std::abs(d) <= 5e-3);
  }
}

TEST_CASE("standardized estimates at the true theta look normal") {
  const GroundTruth gt = default_sigmoid_poly(4);
  const ScoreContext ctx = context({0.0, 0.178, 0.358, 0.538, 0.718}, 3);
  const Eigen::MatrixXd big = CovariateLaw::uniform(4).draw(400000, 13);
  const double truth = true_value(gt, big, std::vector<double>(400000, 0.358), ctx.vp).value;
  std::vector<double> z;
  for (int r = 0; r < 300; ++r) {
    const Dataset ds = generate(gt, 10000, ctx.design, CovariateLaw::uniform(4), child_seed(14, r));
    const ScoreTable table = build_score_table(ds, gt.theta(ds.x()), ctx);
    const ValueEstimate e = estimate_value(table, std::vector<double>(ds.size(), 0.358));
    z.push_back((e.point - truth) / e.standard_error());
  }
  CHECK(std::abs(stats::skewness(z)) < 0.3);
  CHECK(std::abs(stats::excess_kurtosis(z)) < 0.5);
}

TEST_CASE("orthogonality probe") {
  const Synthetic s = synthetic(20000, 15);
  ProbeTarget target;
  target.actions.assign(s.ds.size(), 0.358);
  const double zero_eps[1] = {0.0};
  const ProbeResult z = orthogonality_probe(s.ds, target, s.theta, s.ctx, zero_eps, 3, 1);
  CHECK(z.rows[0].orthogonal_shift == 0.0);
  CHECK(z.rows[0].plugin_shift == 0.0);

  // Conditional mode: exact expectation over (t, y) given x.
  target.level_probs.resize(5, static_cast<Eigen::Index>(s.ds.size()));
  for (std::size_t j = 0; j < 5; ++j) {
    const std::vector<double> lv(s.ds.size(), s.ctx.design.levels[j]);
    target.level_probs.row(static_cast<Eigen::Index>(j)) = s.gt.prob(s.ds.x(), lv).transpose();
  }
  const auto eps = default_probe_epsilons();
  const ProbeResult r = orthogonality_probe(s.ds, target, s.theta, s.ctx, eps, 4, 2);
  for (const auto& row : r.rows) CHECK(row.orthogonal_shift < row.plugin_shift);
  CHECK(r.orthogonal_slope >= 1.7);
  CHECK(r.plugin_slope <= 1.3);

  ProbeTarget ate;
  ate.ate = true;
  ate.level = 0.538;
  ate.level_probs = target.level_probs;
  const ProbeResult ra = orthogonality_probe(s.ds, ate, s.theta, s.ctx, eps, 4, 2);
  CHECK(ra.orthogonal_slope >= 1.7);
}
