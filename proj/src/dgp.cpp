#include "dlpt/dgp.hpp"

#include "dlpt/error.hpp"
#include "dlpt/rng.hpp"

#include <cmath>

namespace dlpt {

void ValueParams::validate() const {
  if (!(std::isfinite(w) && w >= 0.0 && std::isfinite(c) && c >= 0.0))
    throw InvalidInput("value parameters w and c must be finite and nonnegative");
}

Eigen::VectorXd SigmoidPoly::theta(const Eigen::Ref<const Eigen::VectorXd>& x) const {
  Eigen::VectorXd th = bias + linear * x;
  if (quadratic.size() > 0) th += quadratic * x.cwiseAbs2();
  return th;
}

GroundTruth::GroundTruth(Variant v, std::size_t dim, double t_max) : v_(std::move(v)), dim_(dim), t_max_(t_max) {
  if (!(t_max > 0.0)) throw InvalidInput("ground truth t_max must be positive");
  const auto d = static_cast<Eigen::Index>(dim);
  if (const auto* sp = std::get_if<SigmoidPoly>(&v_)) {
    if (sp->bias.size() == 0) throw InvalidInput("sigmoid-polynomial truth needs coefficients");
    if (sp->linear.rows() != sp->bias.size() || sp->linear.cols() != d)
      throw InvalidInput("sigmoid-polynomial linear block has the wrong shape");
    if (sp->quadratic.size() > 0 && (sp->quadratic.rows() != sp->bias.size() || sp->quadratic.cols() != d))
      throw InvalidInput("sigmoid-polynomial quadratic block has the wrong shape");
  } else if (const auto* sn = std::get_if<SmoothNonparam>(&v_)) {
    if (sn->gamma.size() != d) throw InvalidInput("sine-latent gamma has the wrong length");
  } else {
    const auto& fn = std::get<FittedNet>(v_);
    if (!fn.net) throw InvalidInput("fitted-net truth has no network");
    if (fn.net->input_dim() != dim) throw InvalidInput("fitted-net truth has the wrong input dimension");
  }
}

Eigen::MatrixXd GroundTruth::theta(const Eigen::MatrixXd& x) const {
  const auto* sp = std::get_if<SigmoidPoly>(&v_);
  if (!sp) throw InvalidInput("ground truth has no closed-form nuisance coefficients");
  Eigen::MatrixXd th = sp->linear * x;
  th.colwise() += sp->bias;
  if (sp->quadratic.size() > 0) th += sp->quadratic * x.cwiseAbs2();
  return th;
}

void GroundTruth::prob_and_dt(const Eigen::MatrixXd& x, std::span<const double> a, std::span<double> p,
                              std::span<double> dp) const {
  const auto n = static_cast<std::size_t>(x.cols());
  if (a.size() != n || p.size() != n || dp.size() != n) throw InvalidInput("action count differs from covariate count");
  if (static_cast<std::size_t>(x.rows()) != dim_) throw InvalidInput("covariate dimension mismatch");
  for (double t : a)
    if (!(t >= -kLevelTolerance && t <= t_max_ + kLevelTolerance))
      throw InvalidInput("treatment outside [0, t_max]");

  auto finish = [&](std::size_t i, double z, double dz) {
    if (!std::isfinite(z)) throw NumericalError("non-finite latent outcome index");
    const double g = sigmoid(z);
    if (!(g > 0.0 && g < 1.0)) throw NumericalError("outcome probability saturated at 0 or 1");
    p[i] = g;
    dp[i] = g * (1.0 - g) * dz;
  };

  if (const auto* sp = std::get_if<SigmoidPoly>(&v_)) {
    const Eigen::MatrixXd th = theta(x);
    const int K = sp->degree();
    for (std::size_t i = 0; i < n; ++i) {
      double z = 0.0, dz = 0.0, pw = 1.0, prev = 0.0;
      for (int k = 0; k <= K; ++k) {
        const double c = th(k, static_cast<Eigen::Index>(i));
        z += c * pw;
        dz += k * c * prev;  // prev = a^(k-1)
        prev = pw;
        pw *= a[i];
      }
      finish(i, z, dz);
    }
  } else if (const auto* sn = std::get_if<SmoothNonparam>(&v_)) {
    for (std::size_t i = 0; i < n; ++i) {
      const double z = sn->alpha * std::sin(sn->beta * a[i]) + sn->gamma.dot(x.col(static_cast<Eigen::Index>(i))) +
                       sn->offset;
      finish(i, z, sn->alpha * sn->beta * std::cos(sn->beta * a[i]));
    }
  } else {
    const auto& fn = std::get<FittedNet>(v_);
    Eigen::VectorXd pv, dv;
    fn.net->prob_and_dt(x, Eigen::Map<const Eigen::VectorXd>(a.data(), static_cast<Eigen::Index>(n)), pv, dv);
    for (std::size_t i = 0; i < n; ++i) {
      const auto ii = static_cast<Eigen::Index>(i);
      if (!(pv[ii] > 0.0 && pv[ii] < 1.0)) throw NumericalError("outcome probability saturated at 0 or 1");
      p[i] = pv[ii];
      dp[i] = dv[ii];
    }
  }
}

Eigen::VectorXd GroundTruth::prob(const Eigen::MatrixXd& x, std::span<const double> a) const {
  Eigen::VectorXd p(x.cols()), dp(x.cols());
  prob_and_dt(x, a, std::span<double>(p.data(), static_cast<std::size_t>(p.size())),
              std::span<double>(dp.data(), static_cast<std::size_t>(dp.size())));
  return p;
}

double outcome_prob(const GroundTruth& gt, const Eigen::VectorXd& x, double t) {
  const double a[1] = {t};
  return gt.prob(Eigen::MatrixXd(x), a)[0];
}

Eigen::MatrixXd CovariateLaw::draw(std::size_t n, std::uint64_t seed) const {
  if (!discrete_values.empty() && discrete_values.size() != d)
    throw InvalidInput("covariate law needs one value list per coordinate");
  Eigen::MatrixXd x(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(n));
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i) {
    Rng rng(child_seed(seed, static_cast<std::uint64_t>(i)));
    for (std::size_t j = 0; j < d; ++j) {
      const bool discrete = !discrete_values.empty() && !discrete_values[j].empty();
      x(static_cast<Eigen::Index>(j), i) =
          discrete ? discrete_values[j][rng.below(discrete_values[j].size())] : rng.uniform(-1.0, 1.0);
    }
  }
  return x;
}

Dataset generate(const GroundTruth& gt, std::size_t n, const Design& design, const CovariateLaw& law,
                 std::uint64_t seed) {
  design.validate();
  if (n == 0) throw InvalidInput("cannot generate an empty dataset");
  if (law.d != gt.dim()) throw InvalidInput("covariate law dimension differs from the ground truth");
  Eigen::MatrixXd x = law.draw(n, child_seed(seed, "covariates"));

  const std::uint64_t arm_seed = child_seed(seed, "arms");
  Eigen::VectorXd t(static_cast<Eigen::Index>(n));
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i) {
    Rng rng(child_seed(arm_seed, static_cast<std::uint64_t>(i)));
    const double u = rng.uniform();
    double cum = 0.0;
    std::size_t j = 0;
    for (; j + 1 < design.m(); ++j) {
      cum += design.probs[j];
      if (u < cum) break;
    }
    t[i] = design.levels[j];
  }

  const Eigen::VectorXd p = gt.prob(x, std::span<const double>(t.data(), n));
  const std::uint64_t outcome_seed = child_seed(seed, "outcomes");
  Eigen::VectorXd y(static_cast<Eigen::Index>(n));
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i) {
    Rng rng(child_seed(outcome_seed, static_cast<std::uint64_t>(i)));
    y[i] = rng.bernoulli(p[i]) ? 1.0 : 0.0;
  }
  return Dataset(std::move(x), std::move(t), std::move(y), design);
}

MonteCarloValue true_value(const GroundTruth& gt, const Eigen::MatrixXd& x, std::span<const double> actions,
                           const ValueParams& vp) {
  vp.validate();
  const auto n = static_cast<std::size_t>(x.cols());
  if (n == 0) throw InvalidInput("no covariates to average over");
  const Eigen::VectorXd p = gt.prob(x, actions);
  double sum = 0.0, sumsq = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double v = vp.w * p[static_cast<Eigen::Index>(i)] - vp.c * actions[i];
    sum += v;
    sumsq += v * v;
  }
  const double mean = sum / static_cast<double>(n);
  const double var = n > 1 ? std::max(0.0, (sumsq - static_cast<double>(n) * mean * mean) / static_cast<double>(n - 1)) : 0.0;
  return {mean, std::sqrt(var / static_cast<double>(n))};
}

BestLevel true_best_level(const GroundTruth& gt, const Eigen::VectorXd& x, std::span<const double> grid,
                          const ValueParams& vp) {
  if (grid.empty()) throw InvalidInput("empty action grid");
  const Eigen::MatrixXd xs = x.replicate(1, static_cast<Eigen::Index>(grid.size()));
  const Eigen::VectorXd p = gt.prob(xs, grid);
  BestLevel best{grid[0], vp.w * p[0] - vp.c * grid[0]};
  for (std::size_t k = 1; k < grid.size(); ++k) {
    const double v = vp.w * p[static_cast<Eigen::Index>(k)] - vp.c * grid[k];
    if (v > best.value || (v == best.value && grid[k] < best.level)) best = {grid[k], v};
  }
  return best;
}

MonteCarloValue true_ate(const GroundTruth& gt, const Eigen::MatrixXd& x, double level) {
  const auto n = static_cast<std::size_t>(x.cols());
  if (n == 0) throw InvalidInput("no covariates to average over");
  const std::vector<double> treated(n, level), control(n, 0.0);
  const Eigen::VectorXd diff = gt.prob(x, treated) - gt.prob(x, control);
  const double mean = diff.mean();
  const double var = n > 1 ? (diff.array() - mean).square().sum() / static_cast<double>(n - 1) : 0.0;
  return {mean, std::sqrt(var / static_cast<double>(n))};
}

GroundTruth default_sigmoid_poly(std::size_t d) {
  if (d < 3) throw InvalidInput("default truths need at least 3 covariates");
  SigmoidPoly sp;
  sp.bias = Eigen::Vector4d(-2.0, 10.0, -8.0, 1.0);
  sp.linear = Eigen::MatrixXd::Zero(4, static_cast<Eigen::Index>(d));
  sp.linear(0, 0) = 1.0;
  sp.linear(0, 1) = -0.8;
  sp.linear(1, 1) = 5.0;
  sp.linear(1, 2) = 1.0;
  sp.linear(2, 0) = 5.0;
  return GroundTruth(std::move(sp), d);
}

GroundTruth default_sine_latent(std::size_t d) {
  if (d < 3) throw InvalidInput("default truths need at least 3 covariates");
  SmoothNonparam sn;
  sn.alpha = 2.5;
  sn.beta = 4.0;
  sn.gamma = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(d));
  sn.gamma[0] = 1.0;
  sn.gamma[1] = -0.8;
  sn.gamma[2] = 0.5;
  sn.offset = -1.0;
  return GroundTruth(std::move(sn), d);
}

GroundTruth default_linear_poly(std::size_t d) {
  if (d < 3) throw InvalidInput("default truths need at least 3 covariates");
  SigmoidPoly sp;
  // Steep enough in t that the optimal action is interior and inside the design span.
  sp.bias = Eigen::Vector2d(0.5, 7.0);
  sp.linear = Eigen::MatrixXd::Zero(2, static_cast<Eigen::Index>(d));
  sp.linear(0, 0) = 0.5;
  sp.linear(0, 2) = -0.3;
  sp.linear(1, 1) = 1.5;
  return GroundTruth(std::move(sp), d);
}

}  // namespace dlpt
