#include "dlpt/benchmarks.hpp"
#include "dlpt/dgp.hpp"
#include "dlpt/error.hpp"
#include "dlpt/rng.hpp"

#include <doctest.h>

#include <cmath>
#include <vector>

using namespace dlpt;

namespace {

const std::vector<double> kLevels{0.0, 0.178, 0.358, 0.538, 0.718};

Dataset from_columns(const Eigen::MatrixXd& x, const Eigen::VectorXd& t, const Eigen::VectorXd& y) {
  return Dataset(x, t, y, Design::uniform(kLevels));
}

Dataset synthetic(std::size_t n, std::uint64_t seed) {
  return generate(default_sigmoid_poly(3), n, Design::uniform(kLevels), CovariateLaw::uniform(3), seed);
}

// Iteratively reweighted least squares through a QR solve: an independent
// route to the logistic maximum likelihood estimate.
Eigen::VectorXd irls(const Eigen::MatrixXd& f, const Eigen::VectorXd& y) {
  Eigen::VectorXd b = Eigen::VectorXd::Zero(f.cols());
  for (int it = 0; it < 50; ++it) {
    const Eigen::ArrayXd p = (f * b).unaryExpr([](double z) { return sigmoid(z); }).array();
    const Eigen::ArrayXd w = p * (1 - p);
    const Eigen::VectorXd work = (f * b).array() + (y.array() - p) / w;
    const Eigen::MatrixXd sf = f.array().colwise() * w.sqrt();
    const Eigen::VectorXd sz = work.array() * w.sqrt();
    b = sf.colPivHouseholderQr().solve(sz);
  }
  return b;
}

Eigen::MatrixXd with_intercept(const Eigen::MatrixXd& x, const Eigen::VectorXd& t) {
  Eigen::MatrixXd f(x.cols(), x.rows() + 2);
  f.col(0).setOnes();
  f.middleCols(1, x.rows()) = x.transpose();
  f.col(x.rows() + 1) = t;
  return f;
}

}  // namespace

TEST_CASE("benchmark names round trip") {
  for (auto k : {BenchmarkKind::LinearReg, BenchmarkKind::LogisticReg, BenchmarkKind::LogitChoice,
                 BenchmarkKind::PlainNetwork, BenchmarkKind::Uniform})
    CHECK(benchmark_kind_from_string(to_string(k)) == k);
  CHECK(to_string(BenchmarkKind::LogitChoice) == "LCM");
  CHECK_THROWS_AS(benchmark_kind_from_string("SVM"), InvalidInput);
}

TEST_CASE("linear regression recovers an exactly linear response") {
  const std::size_t n = 5000;
  const Eigen::MatrixXd x = CovariateLaw::uniform(2).draw(n, 1);
  Rng rng(2);
  Eigen::VectorXd t(n), y(n);
  for (std::size_t i = 0; i < n; ++i) {
    t[i] = kLevels[rng.below(5)];
    y[i] = 0.4 + 0.1 * x(0, i) - 0.05 * x(1, i) + 0.3 * t[i];
  }
  const ResponseModel m = fit(BenchmarkKind::LinearReg, from_columns(x, t, y), BenchmarkConfig{});
  const auto& coef = std::get<LinearRegModel>(m.m).coef;
  CHECK((coef - Eigen::Vector4d(0.4, 0.1, -0.05, 0.3)).cwiseAbs().maxCoeff() < 1e-2);
  CHECK(m.kind() == BenchmarkKind::LinearReg);
}

TEST_CASE("linear regression matches an independent QR least squares") {
  const Dataset ds = synthetic(4000, 3);
  const ResponseModel m = fit(BenchmarkKind::LinearReg, ds, BenchmarkConfig{});
  const Eigen::VectorXd qr = with_intercept(ds.x(), ds.t()).colPivHouseholderQr().solve(ds.y());
  CHECK((std::get<LinearRegModel>(m.m).coef - qr).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("linear regression rejects a rank-deficient design") {
  const Eigen::MatrixXd x = Eigen::MatrixXd::Zero(2, 50);
  const Eigen::VectorXd t = Eigen::VectorXd::Zero(50), y = Eigen::VectorXd::Constant(50, 0.5);
  CHECK_THROWS_AS(fit(BenchmarkKind::LinearReg, from_columns(x, t, y), BenchmarkConfig{}), SingularityError);
}

TEST_CASE("logistic regression with no signal fits the base rate") {
  const std::size_t n = 1000;
  Eigen::VectorXd y(n);
  for (std::size_t i = 0; i < n; ++i) y[i] = i % 10 < 3 ? 1.0 : 0.0;
  const ResponseModel m =
      fit(BenchmarkKind::LogisticReg, from_columns(Eigen::MatrixXd::Zero(2, n), Eigen::VectorXd::Zero(n), y),
          BenchmarkConfig{});
  const auto& coef = std::get<LogisticRegModel>(m.m).coef;
  CHECK(std::abs(coef[0] - std::log(0.3 / 0.7)) < 1e-3);
  CHECK(coef.tail(3).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("logistic and logit-choice fits agree with IRLS and converge") {
  const Dataset ds = synthetic(6000, 4);
  const ResponseModel lr = fit(BenchmarkKind::LogisticReg, ds, BenchmarkConfig{});
  const auto& lm = std::get<LogisticRegModel>(lr.m);
  CHECK(lm.diagnostics.converged);
  CHECK(lm.diagnostics.gradient_norm < 1e-6);
  CHECK((lm.coef - irls(with_intercept(ds.x(), ds.t()), ds.y())).cwiseAbs().maxCoeff() < 1e-5);

  const ResponseModel lc = fit(BenchmarkKind::LogitChoice, ds, BenchmarkConfig{});
  const auto& cm = std::get<LogitChoiceModel>(lc.m);
  CHECK(cm.diagnostics.converged);
  CHECK(cm.alpha.size() == 4);
  CHECK(cm.beta.size() == 4);
  Eigen::MatrixXd f(ds.size(), 8);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto s = ds.sample(i);
    f.row(i) << 1.0, s.x.transpose(), s.t, s.t * s.x.transpose();
  }
  const Eigen::VectorXd b = irls(f, ds.y());
  CHECK((cm.alpha - b.head(4)).cwiseAbs().maxCoeff() < 1e-5);
  CHECK((cm.beta - b.tail(4)).cwiseAbs().maxCoeff() < 1e-5);
}

TEST_CASE("iteration cap is flagged") {
  const Dataset ds = synthetic(2000, 5);
  BenchmarkConfig cfg;
  cfg.max_iterations = 1;
  const ResponseModel m = fit(BenchmarkKind::LogisticReg, ds, cfg);
  CHECK(!std::get<LogisticRegModel>(m.m).diagnostics.converged);
}

TEST_CASE("predict with zero coefficients") {
  const Eigen::Vector3d x(0.2, -0.4, 0.9);
  CHECK(predict(ResponseModel{LinearRegModel{Eigen::VectorXd::Zero(5)}}, x, 0.5) == 0.0);
  CHECK(predict(ResponseModel{LogisticRegModel{Eigen::VectorXd::Zero(5), {}}}, x, 0.5) == 0.5);
  CHECK(predict(ResponseModel{LogitChoiceModel{Eigen::VectorXd::Zero(4), Eigen::VectorXd::Zero(4), {}}}, x, 0.5) ==
        0.5);
}

TEST_CASE("model t-derivatives match central differences") {
  const Dataset ds = synthetic(3000, 6);
  BenchmarkConfig cfg;
  cfg.train.epochs = 3;
  const Eigen::MatrixXd x = ds.x().leftCols(20);
  std::vector<double> t(20), up(20), down(20);
  for (int i = 0; i < 20; ++i) {
    t[i] = 0.05 + 0.04 * i;
    up[i] = t[i] + 1e-6;
    down[i] = t[i] - 1e-6;
  }
  for (auto k : {BenchmarkKind::LinearReg, BenchmarkKind::LogisticReg, BenchmarkKind::LogitChoice,
                 BenchmarkKind::PlainNetwork}) {
    const ResponseModel m = fit(k, ds, cfg);
    const Eigen::VectorXd d = dpredict_dt(m, x, t);
    const Eigen::VectorXd fd = (predict(m, x, up) - predict(m, x, down)) / 2e-6;
    CHECK((d - fd).cwiseAbs().maxCoeff() < 1e-6);
  }
}

TEST_CASE("uniform benchmark level values and plug-in policy") {
  const std::vector<double> means{0.10, 0.16, 0.17, 0.18, 0.185};
  const std::size_t per = 200;
  Eigen::MatrixXd x = Eigen::MatrixXd::Zero(1, 5 * per);
  Eigen::VectorXd t(5 * per), y(5 * per);
  for (std::size_t j = 0; j < 5; ++j)
    for (std::size_t i = 0; i < per; ++i) {
      t[j * per + i] = kLevels[j];
      y[j * per + i] = i < static_cast<std::size_t>(std::lround(means[j] * per)) ? 1.0 : 0.0;
    }
  const ResponseModel m = fit(BenchmarkKind::Uniform, from_columns(x, t, y), BenchmarkConfig{});
  const auto& u = std::get<UniformModel>(m.m);
  const auto values = u.level_values(ValueParams{0.5, 0.1});
  const std::vector<double> expect{0.05, 0.0622, 0.0492, 0.0362, 0.0207};
  for (std::size_t j = 0; j < 5; ++j) CHECK(values[j] == doctest::Approx(expect[j]).epsilon(1e-9));
  CHECK(u.best_level(ValueParams{0.5, 0.1}) == 0.178);
  const Policy p = plugin_policy(m, x, kLevels, ValueParams{0.5, 0.1}, 1.0);
  CHECK(std::holds_alternative<ConstantPolicy>(p.rule));
  CHECK(apply(p, Eigen::VectorXd::Zero(1)) == 0.178);
  CHECK_THROWS_AS(predict(m, Eigen::VectorXd::Zero(1), 0.5), InvalidInput);
  CHECK_THROWS_AS(dpredict_dt(m, x, std::vector<double>(x.cols(), 0.0)), InvalidInput);
}

TEST_CASE("uniform choice is invariant to shifting outcomes when c is zero") {
  UniformModel u{kLevels, {0.2, 0.35, 0.31, 0.4, 0.38}, {1, 1, 1, 1, 1}};
  UniformModel shifted = u;
  for (auto& m : shifted.means) m += 0.17;
  CHECK(u.best_level(ValueParams{0.5, 0.0}) == shifted.best_level(ValueParams{0.5, 0.0}));
}

TEST_CASE("plug-in ATE properties") {
  const Dataset ds = synthetic(3000, 7);
  const ResponseModel lr = fit(BenchmarkKind::LinearReg, ds, BenchmarkConfig{});
  const double beta = std::get<LinearRegModel>(lr.m).coef[4];
  CHECK(plugin_ate(lr, ds.x(), 0.0) == 0.0);
  CHECK(plugin_ate(lr, ds.x(), 0.538) == doctest::Approx(beta * 0.538).epsilon(1e-12));
  CHECK(plugin_ate(lr, ds.x(), 0.178) == doctest::Approx(plugin_ate(lr, ds.x(), 0.718) * 0.178 / 0.718).epsilon(1e-10));

  const ResponseModel lc = fit(BenchmarkKind::LogitChoice, ds, BenchmarkConfig{});
  double brute = 0;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const Eigen::VectorXd xi = ds.x().col(static_cast<Eigen::Index>(i));
    brute += predict(lc, xi, 0.358) - predict(lc, xi, 0.0);
  }
  CHECK(plugin_ate(lc, ds.x(), 0.358) == doctest::Approx(brute / static_cast<double>(ds.size())).epsilon(1e-10));
}

TEST_CASE("plug-in policies agree with an exhaustive scan") {
  const Dataset ds = synthetic(2000, 8);
  const ValueParams vp;
  for (auto k : {BenchmarkKind::LogisticReg, BenchmarkKind::LogitChoice}) {
    const ResponseModel m = fit(k, ds, BenchmarkConfig{});
    const auto actions = plugin_actions(m, ds.x(), kLevels, vp, 1.0);
    for (std::size_t i = 0; i < ds.size(); i += 13) {
      const Eigen::VectorXd xi = ds.x().col(static_cast<Eigen::Index>(i));
      double best = kLevels[0], bv = vp.w * predict(m, xi, kLevels[0]);
      for (double a : kLevels) {
        const double v = vp.w * predict(m, xi, a) - vp.c * a;
        if (v > bv) {
          bv = v;
          best = a;
        }
      }
      CHECK(actions[i] == best);
    }
    const std::vector<double> single{0.358};
    for (double a : plugin_actions(m, ds.x(), single, vp, 1.0)) CHECK(a == 0.358);
  }
}
