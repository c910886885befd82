#include "dlpt/dgp.hpp"
#include "dlpt/kernels.hpp"
#include "dlpt/rng.hpp"

#include <doctest.h>
#include <omp.h>

#include <cstring>
#include <vector>

using namespace dlpt;

namespace {

struct Fixture {
  ScoreContext ctx;
  Dataset ds;
  Eigen::MatrixXd theta;

  explicit Fixture(std::size_t n, int K = 3) {
    ctx.design = Design::uniform({0.0, 0.178, 0.358, 0.538, 0.718});
    ctx.K = K;
    ds = generate(default_sine_latent(4), n, ctx.design, CovariateLaw::uniform(4), 3);
    Rng rng(4);
    theta.resize(K + 1, static_cast<Eigen::Index>(n));
    for (Eigen::Index i = 0; i < theta.size(); ++i) theta.data()[i] = rng.uniform(-1.0, 1.0);
  }
};

bool bitwise_equal(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  return a.rows() == b.rows() && a.cols() == b.cols() &&
         std::memcmp(a.data(), b.data(), sizeof(double) * static_cast<std::size_t>(a.size())) == 0;
}

// Keeps several threads in play even on a single core.
struct Threads {
  int saved = omp_get_max_threads();
  explicit Threads(int n) { omp_set_num_threads(n); }
  ~Threads() { omp_set_num_threads(saved); }
};

}  // namespace

TEST_CASE("Horner evaluation matches the feature dot product") {
  Rng rng(1);
  for (int rep = 0; rep < 50; ++rep) {
    const int K = static_cast<int>(rng.below(kernels::kMaxDegree + 1));
    Eigen::VectorXd th(K + 1);
    for (auto& v : th) v = rng.uniform(-2, 2);
    const double t = rng.uniform();
    CHECK(kernels::poly_eval(th.data(), K, t) == doctest::Approx(th.dot(poly_features(t, K))).epsilon(1e-13));
    CHECK(kernels::poly_eval_dt(th.data(), K, t) == doctest::Approx(th.dot(poly_features_dt(t, K))).epsilon(1e-12));
  }
}

TEST_CASE("serial and parallel corrections are bitwise identical") {
  const Threads threads(4);
  for (LossKind kind : {LossKind::CrossEntropy, LossKind::SquaredError}) {
    Fixture f(5003);
    f.ctx.loss = kind;
    Eigen::MatrixXd a, b;
    CHECK(kernels::corrections_serial(f.theta, f.ds.t(), f.ds.y(), f.ctx, a) == -1);
    CHECK(kernels::corrections_parallel(f.theta, f.ds.t(), f.ds.y(), f.ctx, b) == -1);
    CHECK(bitwise_equal(a, b));
  }
}

TEST_CASE("parallel singular index is the smallest one") {
  const Threads threads(4);
  Fixture f(3000, 1);
  f.ctx.design = Design::uniform({0.0, 0.5});
  f.ctx.ridge = 0.0;
  f.theta.setZero();
  // A huge intercept makes Lambda numerically zero, hence singular without ridge.
  for (Eigen::Index i : {2999, 1777, 2500}) f.theta(0, i) = 800.0;
  Eigen::VectorXd t = Eigen::VectorXd::Zero(3000);
  Eigen::VectorXd y = Eigen::VectorXd::Zero(3000);
  Eigen::MatrixXd out;
  CHECK(kernels::corrections_serial(f.theta, t, y, f.ctx, out) == 1777);
  CHECK(kernels::corrections_parallel(f.theta, t, y, f.ctx, out) == 1777);
}

TEST_CASE("serial and parallel value scores and argmax are bitwise identical") {
  const Threads threads(4);
  Fixture f(4001);
  Eigen::MatrixXd corr;
  kernels::corrections_serial(f.theta, f.ds.t(), f.ds.y(), f.ctx, corr);
  ScoreTable table{f.theta, corr, f.ctx.vp, 1.0};
  Rng rng(5);
  std::vector<double> actions(4001);
  for (auto& a : actions) a = rng.uniform();
  std::vector<double> s(4001), p(4001);
  kernels::value_scores_serial(table, actions, s);
  kernels::value_scores_parallel(table, actions, p);
  CHECK(std::memcmp(s.data(), p.data(), sizeof(double) * s.size()) == 0);
  for (std::size_t i = 0; i < 4001; i += 400) CHECK(s[i] == table.value(i, actions[i]));

  const std::vector<double> cands{0.0, 0.178, 0.358, 0.538, 0.718, 1.0};
  std::vector<std::size_t> as(4001), ap(4001);
  kernels::argmax_serial(table, cands, as);
  kernels::argmax_parallel(table, cands, ap);
  CHECK(as == ap);
  for (std::size_t i = 0; i < 4001; i += 97) {
    std::size_t best = 0;
    for (std::size_t k = 1; k < cands.size(); ++k)
      if (table.value(i, cands[k]) > table.value(i, cands[best])) best = k;
    CHECK(as[i] == best);
  }
}

TEST_CASE("argmax ties go to the earlier candidate") {
  Fixture f(10, 1);
  ScoreTable table{Eigen::MatrixXd::Zero(2, 10), Eigen::MatrixXd::Zero(2, 10), ValueParams{0.0, 0.0}, 1.0};
  const std::vector<double> cands{0.3, 0.1, 0.9};
  std::vector<std::size_t> out(10);
  kernels::argmax_parallel(table, cands, out);
  for (auto k : out) CHECK(k == 0);
}

TEST_CASE("conditional correction equals the probability-weighted observed corrections") {
  Fixture f(1);
  Rng rng(6);
  for (int rep = 0; rep < 10; ++rep) {
    double th[4], probs[5];
    for (double& v : th) v = rng.uniform(-1, 1);
    for (double& p : probs) p = rng.uniform(0.05, 0.95);
    double cond[4];
    REQUIRE(kernels::conditional_correction(th, 3, probs, f.ctx, cond));
    double expect[4] = {0, 0, 0, 0};
    for (std::size_t j = 0; j < 5; ++j) {
      double v1[4], v0[4];
      kernels::correction(th, 3, f.ctx.design.levels[j], 1.0, f.ctx, v1);
      kernels::correction(th, 3, f.ctx.design.levels[j], 0.0, f.ctx, v0);
      for (int k = 0; k < 4; ++k) expect[k] += f.ctx.design.probs[j] * (probs[j] * v1[k] + (1 - probs[j]) * v0[k]);
    }
    for (int k = 0; k < 4; ++k) CHECK(cond[k] == doctest::Approx(expect[k]).epsilon(1e-9));
  }
}
