#include "dlpt/learners.hpp"

#include "dlpt/error.hpp"
#include "dlpt/kernels.hpp"
#include "dlpt/rng.hpp"
#include "dlpt/stats.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

namespace dlpt {

double ValueSurface::value(std::size_t i, double a) const {
  double v = 0.0;
  evaluate(std::span<const std::size_t>(&i, 1), std::span<const double>(&a, 1), std::span<double>(&v, 1), {});
  return v;
}

double ValueSurface::derivative(std::size_t i, double a) const {
  double v = 0.0, d = 0.0;
  evaluate(std::span<const std::size_t>(&i, 1), std::span<const double>(&a, 1), std::span<double>(&v, 1),
           std::span<double>(&d, 1));
  return d;
}

namespace {
std::vector<std::size_t> all_indices(std::size_t n) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  return idx;
}
}  // namespace

double ValueSurface::mean_value(std::span<const double> actions) const {
  if (actions.size() != size()) throw InvalidInput("one action per sample is required");
  const auto idx = all_indices(size());
  std::vector<double> v(size());
  evaluate(idx, actions, v, {});
  return stats::mean(v);
}

void OrthogonalSurface::evaluate(std::span<const std::size_t> idx, std::span<const double> a,
                                 std::span<double> value, std::span<double> deriv) const {
  const auto n = static_cast<std::ptrdiff_t>(idx.size());
  const bool want = !deriv.empty();
#pragma omp parallel for schedule(static) if (n > 4096)
  for (std::ptrdiff_t k = 0; k < n; ++k) {
    value[k] = table_.value(idx[k], a[k]);
    if (want) deriv[k] = table_.value_da(idx[k], a[k]);
  }
}

void PluginThetaSurface::evaluate(std::span<const std::size_t> idx, std::span<const double> a,
                                  std::span<double> value, std::span<double> deriv) const {
  const int K = table_.degree();
  for (std::size_t k = 0; k < idx.size(); ++k) {
    const double* th = table_.theta.col(idx[k]).data();
    value[k] = kernels::plugin_value(th, K, table_.vp, a[k]);
    if (!deriv.empty()) {
      const double g = sigmoid(kernels::poly_eval(th, K, a[k]));
      deriv[k] = table_.vp.w * g * (1.0 - g) * kernels::poly_eval_dt(th, K, a[k]) - table_.vp.c;
    }
  }
}

void TruthSurface::evaluate(std::span<const std::size_t> idx, std::span<const double> a, std::span<double> value,
                            std::span<double> deriv) const {
  Eigen::MatrixXd xb(x_.rows(), static_cast<Eigen::Index>(idx.size()));
  for (std::size_t k = 0; k < idx.size(); ++k) xb.col(static_cast<Eigen::Index>(k)) = x_.col(idx[k]);
  std::vector<double> p(idx.size()), dp(idx.size());
  gt_.prob_and_dt(xb, a, p, dp);
  for (std::size_t k = 0; k < idx.size(); ++k) {
    value[k] = vp_.w * p[k] - vp_.c * a[k];
    if (!deriv.empty()) deriv[k] = vp_.w * dp[k] - vp_.c;
  }
}

std::vector<double> candidate_levels(std::span<const double> levels, double t_max) {
  if (levels.empty()) throw InvalidInput("candidate list is empty");
  std::vector<double> out(levels.begin(), levels.end());
  for (double a : out) {
    if (!(a >= 0.0 && a <= t_max)) throw InvalidInput("candidate action outside [0, t_max]");
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

std::vector<double> uniform_grid(double t_max, int points) {
  if (points < 1) throw InvalidInput("grid needs at least one point");
  if (points == 1) return {0.0};
  std::vector<double> g(static_cast<std::size_t>(points));
  for (int k = 0; k < points; ++k) g[static_cast<std::size_t>(k)] = t_max * k / (points - 1);
  g.back() = t_max;
  return g;
}

std::vector<double> learn_finite_actions(const ValueSurface& surface, std::span<const double> levels) {
  const auto cand = candidate_levels(levels, surface.t_max());
  const std::size_t n = surface.size();
  const auto idx = all_indices(n);
  std::vector<double> best(n), best_value(n, -std::numeric_limits<double>::infinity());
  std::vector<double> a(n), v(n);
  for (double level : cand) {
    std::fill(a.begin(), a.end(), level);
    surface.evaluate(idx, a, v, {});
    for (std::size_t i = 0; i < n; ++i) {
      if (v[i] > best_value[i]) {
        best_value[i] = v[i];
        best[i] = level;
      }
    }
  }
  return best;
}

Policy table_policy(const Eigen::MatrixXd& x, std::span<const double> actions, double t_max) {
  if (static_cast<std::size_t>(x.cols()) != actions.size()) throw InvalidInput("one action per sample is required");
  TablePolicy table;
  for (Eigen::Index i = 0; i < x.cols(); ++i) {
    std::vector<double> key(x.col(i).data(), x.col(i).data() + x.rows());
    table.by_covariates.emplace(std::move(key), actions[static_cast<std::size_t>(i)]);
  }
  return Policy{std::move(table), t_max};
}

Policy learn_finite(const Dataset& eval, const StructuredNet& net, const ScoreContext& ctx,
                    std::span<const double> levels) {
  const ScoreTable table = build_score_table(eval, net, ctx);
  const OrthogonalSurface surface(table);
  return table_policy(eval.x(), learn_finite_actions(surface, levels), ctx.design.t_max);
}

Policy learn_grid(const Dataset& eval, const StructuredNet& net, const ScoreContext& ctx, int points) {
  return learn_finite(eval, net, ctx, uniform_grid(ctx.design.t_max, points));
}

void PolicyLearnConfig::validate() const {
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw InvalidInput("learning rate must be positive");
  if (batch_size < 1) throw InvalidInput("batch size must be positive");
  if (max_epochs < 0) throw InvalidInput("epoch count must be nonnegative");
  if (!(validation_fraction >= 0.0 && validation_fraction < 1.0)) {
    throw InvalidInput("validation fraction must be in [0, 1)");
  }
  if (patience < 1) throw InvalidInput("patience must be positive");
  if (restarts < 1) throw InvalidInput("at least one restart is required");
  if (constant_grid < 2) throw InvalidInput("constant grid needs at least two points");
  for (int h : hidden) {
    if (h < 1) throw InvalidInput("hidden widths must be positive");
  }
}

namespace {

Eigen::MatrixXd gather(const Eigen::MatrixXd& x, std::span<const std::size_t> idx) {
  Eigen::MatrixXd out(x.rows(), static_cast<Eigen::Index>(idx.size()));
  for (std::size_t k = 0; k < idx.size(); ++k) out.col(static_cast<Eigen::Index>(k)) = x.col(idx[k]);
  return out;
}

}  // namespace

double linear_objective(const ValueSurface& surface, const Eigen::MatrixXd& x, std::span<const std::size_t> idx,
                        const LinearPolicy& rule, Eigen::VectorXd* grad) {
  if (idx.empty()) throw InvalidInput("objective needs at least one sample");
  const double t_max = surface.t_max();
  const Eigen::MatrixXd xb = gather(x, idx);
  const Eigen::VectorXd raw = (rule.alpha.transpose() * xb).transpose().array() + rule.beta;
  const std::size_t b = idx.size();
  std::vector<double> a(b), v(b), d(grad ? b : 0);
  for (std::size_t k = 0; k < b; ++k) a[k] = std::clamp(raw[static_cast<Eigen::Index>(k)], 0.0, t_max);
  surface.evaluate(idx, a, v, d);
  if (grad) {
    grad->setZero(rule.alpha.size() + 1);
    for (std::size_t k = 0; k < b; ++k) {
      const double r = raw[static_cast<Eigen::Index>(k)];
      if (!(r > 0.0 && r < t_max)) continue;
      const double g = d[k] / static_cast<double>(b);
      grad->head(rule.alpha.size()) += g * xb.col(static_cast<Eigen::Index>(k));
      (*grad)[rule.alpha.size()] += g;
    }
  }
  return stats::mean(v);
}

double neural_objective(const ValueSurface& surface, const Eigen::MatrixXd& x, std::span<const std::size_t> idx,
                        const Mlp& body, Eigen::VectorXd* grad) {
  if (idx.empty()) throw InvalidInput("objective needs at least one sample");
  const double t_max = surface.t_max();
  const Eigen::MatrixXd xb = gather(x, idx);
  Mlp::Tape tape;
  const Eigen::MatrixXd raw = body.forward(xb, tape);
  const std::size_t b = idx.size();
  std::vector<double> a(b), s(b), v(b), d(grad ? b : 0);
  for (std::size_t k = 0; k < b; ++k) {
    s[k] = sigmoid(raw(0, static_cast<Eigen::Index>(k)));
    a[k] = t_max * s[k];
  }
  surface.evaluate(idx, a, v, d);
  if (grad) {
    Eigen::MatrixXd g_out(1, static_cast<Eigen::Index>(b));
    for (std::size_t k = 0; k < b; ++k) {
      g_out(0, static_cast<Eigen::Index>(k)) = d[k] * t_max * s[k] * (1.0 - s[k]) / static_cast<double>(b);
    }
    grad->setZero(static_cast<Eigen::Index>(body.parameter_count()));
    body.backward(tape, g_out, *grad);
  }
  return stats::mean(v);
}

BestLevel best_constant(const ValueSurface& surface, int points) {
  const auto grid = uniform_grid(surface.t_max(), points);
  BestLevel best{grid[0], -std::numeric_limits<double>::infinity()};
  std::vector<double> a(surface.size());
  for (double level : grid) {
    std::fill(a.begin(), a.end(), level);
    const double v = surface.mean_value(a);
    if (v > best.value) best = {level, v};
  }
  return best;
}

namespace {

using Objective = std::function<double(const Eigen::VectorXd&, std::span<const std::size_t>, Eigen::VectorXd*)>;

struct AscentRun {
  Eigen::VectorXd params;
  int epochs = 0;
};

// Minibatch Adam ascent with early stopping on the holdout objective; returns
// the best holdout checkpoint.
AscentRun ascend(Eigen::VectorXd params, const Objective& objective, const std::vector<std::size_t>& train_idx,
                 const std::vector<std::size_t>& holdout_idx, const PolicyLearnConfig& cfg, std::uint64_t seed) {
  Adam adam(static_cast<std::size_t>(params.size()), cfg.learning_rate);
  double best = objective(params, holdout_idx, nullptr);
  if (!std::isfinite(best)) throw DivergenceError("policy objective is not finite", 0);
  Eigen::VectorXd best_params = params;
  Rng rng(child_seed(seed, "shuffle"));
  std::vector<std::size_t> order = train_idx;
  Eigen::VectorXd grad;
  long step = 0;
  int stall = 0;
  int epoch = 0;
  while (epoch < cfg.max_epochs && stall < cfg.patience) {
    ++epoch;
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t len = std::min<std::size_t>(static_cast<std::size_t>(cfg.batch_size), order.size() - start);
      const double v = objective(params, std::span<const std::size_t>(order).subspan(start, len), &grad);
      ++step;
      if (!std::isfinite(v) || !grad.allFinite()) throw DivergenceError("policy objective diverged", step);
      adam.step(params, -grad);
    }
    const double h = objective(params, holdout_idx, nullptr);
    if (!std::isfinite(h)) throw DivergenceError("policy objective diverged", step);
    if (h > best) {
      best = h;
      best_params = params;
      stall = 0;
    } else {
      ++stall;
    }
  }
  return {best_params, epoch};
}

struct Folds {
  std::vector<std::size_t> train, holdout, all;
};

Folds policy_folds(std::size_t n, const PolicyLearnConfig& cfg) {
  Folds f;
  f.all = all_indices(n);
  const auto n_hold = static_cast<std::size_t>(std::llround(cfg.validation_fraction * static_cast<double>(n)));
  if (n_hold == 0 || n_hold >= n) {
    f.train = f.all;
    f.holdout = f.all;
    return f;
  }
  const double frac[2] = {1.0 - cfg.validation_fraction, cfg.validation_fraction};
  auto parts = split_indices(n, frac, child_seed(cfg.seed, "policy-holdout"));
  f.train = std::move(parts[0]);
  f.holdout = std::move(parts[1]);
  return f;
}

// Picks the best candidate by the selection objective (first wins on ties) and
// records the running best. Candidates 0 and 1 are the zero policy and the best
// constant; the pick falls back to them when it is worse on the full objective.
struct Selection {
  std::size_t best = 0;
  std::vector<double> history;
};

Selection select(std::span<const double> picking, std::span<const double> full) {
  Selection s;
  double best = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < picking.size(); ++k) {
    if (picking[k] > best) {
      best = picking[k];
      s.best = k;
    }
    s.history.push_back(best);
  }
  const std::size_t guard = full[1] > full[0] ? 1 : 0;
  if (full[s.best] < full[guard]) s.best = guard;
  return s;
}

constexpr double kMaxRaw = 30.0;

double action_logit(double action, double t_max) {
  const double p = action / t_max;
  if (p <= 0.0) return -kMaxRaw;
  if (p >= 1.0) return kMaxRaw;
  return std::clamp(std::log(p / (1.0 - p)), -kMaxRaw, kMaxRaw);
}

std::vector<int> policy_dims(std::size_t d, const std::vector<int>& hidden) {
  std::vector<int> dims{static_cast<int>(d)};
  dims.insert(dims.end(), hidden.begin(), hidden.end());
  dims.push_back(1);
  return dims;
}

Mlp constant_body(std::size_t d, const std::vector<int>& hidden, double action, double t_max) {
  Mlp body(policy_dims(d, hidden));
  body.bias(body.layer_count() - 1)[0] = action_logit(action, t_max);
  return body;
}

}  // namespace

LearnResult learn_linear(const ValueSurface& surface, const Eigen::MatrixXd& x, const PolicyLearnConfig& cfg) {
  cfg.validate();
  const std::size_t n = surface.size();
  if (n == 0) throw InvalidInput("evaluation set is empty");
  if (static_cast<std::size_t>(x.cols()) != n) throw InvalidInput("covariates do not match the surface");
  const auto d = x.rows();
  const double t_max = surface.t_max();
  const Folds folds = policy_folds(n, cfg);
  const BestLevel constant = best_constant(surface, cfg.constant_grid);

  auto unpack = [d](const Eigen::VectorXd& p) { return LinearPolicy{p.head(d), p[d]}; };
  const Objective objective = [&](const Eigen::VectorXd& p, std::span<const std::size_t> idx, Eigen::VectorXd* g) {
    return linear_objective(surface, x, idx, unpack(p), g);
  };

  std::vector<Eigen::VectorXd> candidates;
  Eigen::VectorXd start = Eigen::VectorXd::Zero(d + 1);
  candidates.push_back(start);  // zero policy
  start[d] = constant.level;
  candidates.push_back(start);  // best constant

  LearnResult result;
  const std::uint64_t restart_seed = child_seed(cfg.seed, "policy-restart");
  for (int r = 0; r < cfg.restarts; ++r) {
    Eigen::VectorXd init = Eigen::VectorXd::Zero(d + 1);
    if (r == 0) {
      init[d] = constant.level;
    } else {
      Rng rng(child_seed(restart_seed, static_cast<std::uint64_t>(r)));
      for (Eigen::Index k = 0; k < d; ++k) init[k] = rng.normal() * t_max / std::sqrt(static_cast<double>(d));
      init[d] = rng.uniform(0.0, t_max);
    }
    const AscentRun run = ascend(init, objective, folds.train, folds.holdout, cfg, child_seed(restart_seed, r));
    result.epochs += run.epochs;
    candidates.push_back(run.params);
  }
  std::vector<double> full, picking;
  for (const auto& c : candidates) {
    full.push_back(objective(c, folds.all, nullptr));
    picking.push_back(cfg.select_on_holdout ? objective(c, folds.holdout, nullptr) : full.back());
  }
  result.restart_objectives.assign(full.begin() + 2, full.end());
  const Selection s = select(picking, full);
  result.history = s.history;
  result.selection_objective = picking[s.best];
  result.objective = full[s.best];
  result.policy = Policy{unpack(candidates[s.best]), t_max};
  return result;
}

LearnResult learn_neural(const ValueSurface& surface, const Eigen::MatrixXd& x, const PolicyLearnConfig& cfg) {
  cfg.validate();
  const std::size_t n = surface.size();
  if (n == 0) throw InvalidInput("evaluation set is empty");
  if (static_cast<std::size_t>(x.cols()) != n) throw InvalidInput("covariates do not match the surface");
  const auto d = static_cast<std::size_t>(x.rows());
  const double t_max = surface.t_max();
  const Folds folds = policy_folds(n, cfg);
  const BestLevel constant = best_constant(surface, cfg.constant_grid);

  Mlp work(policy_dims(d, cfg.hidden));
  const Objective objective = [&](const Eigen::VectorXd& p, std::span<const std::size_t> idx, Eigen::VectorXd* g) {
    work.params() = p;
    return neural_objective(surface, x, idx, work, g);
  };

  std::vector<Mlp> candidates;
  candidates.push_back(constant_body(d, cfg.hidden, 0.0, t_max));
  candidates.push_back(constant_body(d, cfg.hidden, constant.level, t_max));

  LearnResult result;
  const std::uint64_t restart_seed = child_seed(cfg.seed, "policy-restart");
  for (int r = 0; r < cfg.restarts; ++r) {
    Rng rng(child_seed(restart_seed, static_cast<std::uint64_t>(r)));
    Mlp init(policy_dims(d, cfg.hidden), rng);
    if (r == 0) {
      // Hidden layers random so gradients reach them; output starts at the best constant.
      init.weight(init.layer_count() - 1).setZero();
      init.bias(init.layer_count() - 1)[0] = action_logit(constant.level, t_max);
    }
    const AscentRun run = ascend(init.params(), objective, folds.train, folds.holdout, cfg,
                                 child_seed(restart_seed, static_cast<std::uint64_t>(r)));
    result.epochs += run.epochs;
    init.params() = run.params;
    candidates.push_back(std::move(init));
  }
  std::vector<double> full, picking;
  for (const auto& c : candidates) {
    full.push_back(objective(c.params(), folds.all, nullptr));
    picking.push_back(cfg.select_on_holdout ? objective(c.params(), folds.holdout, nullptr) : full.back());
  }
  result.restart_objectives.assign(full.begin() + 2, full.end());
  const Selection s = select(picking, full);
  result.history = s.history;
  result.selection_objective = picking[s.best];
  result.objective = full[s.best];
  result.policy = Policy{NeuralPolicy{candidates[s.best]}, t_max};
  return result;
}

LearnResult learn_linear(const Dataset& eval, const StructuredNet& net, const ScoreContext& ctx,
                         const PolicyLearnConfig& cfg) {
  const ScoreTable table = build_score_table(eval, net, ctx);
  return learn_linear(OrthogonalSurface(table), eval.x(), cfg);
}

LearnResult learn_neural(const Dataset& eval, const StructuredNet& net, const ScoreContext& ctx,
                         const PolicyLearnConfig& cfg) {
  const ScoreTable table = build_score_table(eval, net, ctx);
  return learn_neural(OrthogonalSurface(table), eval.x(), cfg);
}

double mean_percentage_regret(double regret, double optimal_value) {
  if (!(optimal_value > 0.0)) throw MprUndefined("optimal in-class value is not positive; MPR is undefined");
  return 100.0 * regret / optimal_value;
}

RegretReport regret_of_actions(const GroundTruth& gt, const Eigen::MatrixXd& x, std::span<const double> actions,
                               const ValueParams& vp, double optimal_value) {
  RegretReport r;
  r.policy_value = true_value(gt, x, actions, vp).value;
  r.optimal_value = optimal_value;
  r.regret = optimal_value - r.policy_value;
  if (optimal_value > 0.0) r.mpr = mean_percentage_regret(r.regret, optimal_value);
  return r;
}

RegretReport regret(const Policy& policy, const GroundTruth& gt, const Eigen::MatrixXd& x, const ValueParams& vp,
                    double optimal_value) {
  const std::vector<double> actions = apply_all(policy, x);
  return regret_of_actions(gt, x, actions, vp, optimal_value);
}

std::vector<double> oracle_finite_actions(const GroundTruth& gt, const Eigen::MatrixXd& x,
                                          std::span<const double> levels, const ValueParams& vp) {
  const TruthSurface surface(gt, x, vp);
  return learn_finite_actions(surface, levels);
}

std::vector<double> oracle_pointwise_actions(const GroundTruth& gt, const Eigen::MatrixXd& x, int points,
                                             const ValueParams& vp) {
  return oracle_finite_actions(gt, x, uniform_grid(gt.t_max(), points), vp);
}

LearnResult oracle_linear(const GroundTruth& gt, const Eigen::MatrixXd& x, const ValueParams& vp,
                          const PolicyLearnConfig& cfg) {
  const TruthSurface surface(gt, x, vp);
  return learn_linear(surface, x, cfg);
}

}  // namespace dlpt
