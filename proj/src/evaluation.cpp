#include "dlpt/evaluation.hpp"

#include "dlpt/error.hpp"
#include "dlpt/rng.hpp"
#include "dlpt/stats.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <exception>
#include <functional>
#include <limits>
#include <memory>
#include <numeric>

namespace dlpt {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// Runs f(0..count-1) across threads. Each call writes only its own slot, so
// results do not depend on scheduling; the lowest failing index is rethrown.
template <class F>
void parallel_reps(int count, F&& f) {
  std::exception_ptr error;
  int error_index = count;
#pragma omp parallel for schedule(dynamic, 1)
  for (int r = 0; r < count; ++r) {
    try {
      f(r);
    } catch (...) {
#pragma omp critical(dlpt_rep_error)
      {
        if (r < error_index) {
          error_index = r;
          error = std::current_exception();
        }
      }
    }
  }
  if (error) std::rethrow_exception(error);
}

std::uint64_t child(std::uint64_t seed, const char* name, std::uint64_t index) {
  return child_seed(child_seed(seed, name), index);
}

double mean_of(const std::vector<double>& v) { return v.empty() ? kNaN : stats::mean(v); }
double sd_of(const std::vector<double>& v) { return v.size() < 2 ? 0.0 : stats::sample_sd(v); }

std::size_t level_position(const std::vector<double>& levels, double a) {
  for (std::size_t j = 0; j < levels.size(); ++j) {
    if (std::abs(levels[j] - a) <= kLevelTolerance) return j;
  }
  throw InvalidInput("chosen action is not a candidate level");
}

std::size_t argmax_first(const std::vector<double>& v) {
  std::size_t best = 0;
  for (std::size_t j = 1; j < v.size(); ++j) {
    if (v[j] > v[best]) best = j;
  }
  return best;
}

Json number(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

}  // namespace

void PipelineConfig::validate() const {
  if (K < 0) throw InvalidInput("K must be nonnegative");
  vp.validate();
  train.validate();
  policy.validate();
  for (int h : hidden) {
    if (h < 1) throw InvalidInput("hidden widths must be positive");
  }
  if (!(ridge >= 0.0 && ridge <= 1e-3)) throw InvalidInput("ridge must be in [0, 1e-3]");
  if (!(confidence > 0.0 && confidence < 1.0)) throw InvalidInput("confidence must be in (0, 1)");
}

Json to_json(const PipelineConfig& cfg) {
  const auto& t = cfg.train;
  const auto& p = cfg.policy;
  return Json{
      {"K", cfg.K},
      {"vp", to_json(cfg.vp)},
      {"hidden", cfg.hidden},
      {"train",
       {{"loss", to_string(t.loss)},
        {"learning_rate", t.learning_rate},
        {"batch_size", t.batch_size},
        {"epochs", t.epochs},
        {"validation_fraction", t.validation_fraction},
        {"patience", t.patience},
        {"optimizer", t.optimizer == OptimizerKind::Adam ? "adam" : "sgd"},
        {"beta1", t.beta1},
        {"beta2", t.beta2},
        {"epsilon", t.epsilon}}},
      {"standardize", cfg.standardize},
      {"ridge", cfg.ridge},
      {"confidence", cfg.confidence},
      {"policy",
       {{"learning_rate", p.learning_rate},
        {"batch_size", p.batch_size},
        {"max_epochs", p.max_epochs},
        {"validation_fraction", p.validation_fraction},
        {"patience", p.patience},
        {"restarts", p.restarts},
        {"hidden", p.hidden},
        {"constant_grid", p.constant_grid}}},
      {"benchmark",
       {{"hidden", cfg.benchmark.hidden},
        {"standardize", cfg.benchmark.standardize},
        {"max_iterations", cfg.benchmark.max_iterations},
        {"tolerance", cfg.benchmark.tolerance}}},
      {"cross_fit", cfg.cross_fit},
      {"seed", cfg.seed},
  };
}

std::string config_hash(const PipelineConfig& cfg) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : to_json(cfg).dump()) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

ScoreContext score_context(const Design& design, const PipelineConfig& cfg) {
  ScoreContext ctx{design, cfg.train.loss, cfg.vp, cfg.K, cfg.ridge};
  ctx.validate();
  return ctx;
}

StructuredNet fit_nuisance(const Dataset& train_set, const PipelineConfig& cfg, std::uint64_t seed,
                           TrainResult* result) {
  StructuredNet net(train_set.dim(), cfg.hidden, cfg.K, child_seed(seed, "nuisance-init"));
  if (cfg.standardize) net.set_scaling(Standardizer::fit(train_set.x()));
  TrainConfig tc = cfg.train;
  tc.seed = child_seed(seed, "nuisance-train");
  TrainResult r = train(net, train_set, tc);
  if (result) *result = std::move(r);
  return net;
}

namespace {

// Scores each fold with a net fitted on the other fold.
std::vector<double> cross_fit_scores(const Dataset& ds, const PipelineConfig& cfg,
                                     const std::function<std::vector<double>(const Dataset&, const ScoreTable&)>& score) {
  const double halves[2] = {0.5, 0.5};
  const auto folds = split_indices(ds.size(), halves, child_seed(cfg.seed, "cross-fit"));
  const ScoreContext ctx = score_context(ds.design(), cfg);
  std::vector<double> all;
  for (int f = 0; f < 2; ++f) {
    const Dataset fit_part = ds.subset(folds[1 - f]);
    const Dataset eval_part = ds.subset(folds[f]);
    const StructuredNet net = fit_nuisance(fit_part, cfg, child(cfg.seed, "cross-fit-net", f));
    const auto s = score(eval_part, build_score_table(eval_part, net, ctx));
    all.insert(all.end(), s.begin(), s.end());
  }
  return all;
}

}  // namespace

ValueEstimate cross_fit_value(const Dataset& ds, const Policy& policy, const PipelineConfig& cfg) {
  const auto scores = cross_fit_scores(ds, cfg, [&](const Dataset& part, const ScoreTable& table) {
    return value_scores(table, apply_all(policy, part.x()));
  });
  return summarize_scores(scores, cfg.confidence, "value:" + policy_class_name(policy) + ":cross-fit");
}

ValueEstimate cross_fit_ate(const Dataset& ds, double level, const PipelineConfig& cfg) {
  const auto scores =
      cross_fit_scores(ds, cfg, [&](const Dataset&, const ScoreTable& table) { return ate_scores(table, level); });
  return summarize_scores(scores, cfg.confidence, "ate:cross-fit");
}

Design default_design() { return Design::uniform({0.0, 0.178, 0.358, 0.538, 0.718}, 1.0); }

std::vector<Design> coverage_designs() {
  return {Design::uniform({0.0, 0.068, 0.128, 0.168, 0.25}, 1.0),
          Design::uniform({0.0, 0.128, 0.268, 0.358, 0.5}, 1.0),
          Design::uniform({0.0, 0.178, 0.358, 0.538, 0.75}, 1.0),
          Design::uniform({0.0, 0.268, 0.538, 0.718, 1.0}, 1.0)};
}

GroupSpec default_groups() { return {GroupAxis{0, {-0.5, 0.0, 0.5}}, GroupAxis{1, {-0.5, 0.0, 0.5}}}; }

GroundTruthAte ground_truth_ate(const Dataset& ds, double level) {
  const auto j1 = ds.design().level_index(level);
  const auto j0 = ds.design().level_index(0.0);
  if (!j1 || !j0) throw InvalidInput("design lacks the treated or the control level");
  std::vector<double> y1, y0;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    if (ds.arm(i) == *j1) y1.push_back(ds.y()[static_cast<Eigen::Index>(i)]);
    if (ds.arm(i) == *j0) y0.push_back(ds.y()[static_cast<Eigen::Index>(i)]);
  }
  if (y1.empty() || y0.empty()) throw InvalidInput("treated or control arm has no samples");
  const double n1 = static_cast<double>(y1.size()), n0 = static_cast<double>(y0.size());
  GroundTruthAte out;
  out.estimate = stats::mean(y1) - stats::mean(y0);
  if (y1.size() + y0.size() > 2) {
    const double ss = stats::population_variance(y1) * n1 + stats::population_variance(y0) * n0;
    const double pooled = ss / (n1 + n0 - 2.0);
    out.se = std::sqrt(pooled * (1.0 / n1 + 1.0 / n0));
  }
  return out;
}

// ---------------------------------------------------------------- ATE recovery

std::map<std::string, AteAggregate> ate_aggregates(const std::vector<AteRow>& rows) {
  std::map<std::string, AteAggregate> agg;
  for (const auto& r : rows) {
    auto& a = agg[r.method];
    const double err = r.estimate - r.truth;
    a.mape += r.ape;
    a.mse += err * err;
    a.mae += std::abs(err);
    ++a.count;
  }
  for (auto& [m, a] : agg) {
    a.mape /= static_cast<double>(a.count);
    a.mse /= static_cast<double>(a.count);
    a.mae /= static_cast<double>(a.count);
  }
  return agg;
}

AteRecoveryResult ate_recovery_experiment(const Dataset& ds, const Scenario* scenario, const AteRecoveryConfig& ecfg,
                                          const PipelineConfig& cfg) {
  cfg.validate();
  if (ds.empty()) throw InvalidInput("dataset is empty");
  const Design& design = ds.design();
  if (!design.level_index(0.0)) throw InvalidInput("the design needs a control level at 0");
  std::vector<std::size_t> masked = ecfg.masked_levels;
  if (masked.empty()) {
    for (std::size_t j = 0; j < design.m(); ++j) {
      if (design.levels[j] != 0.0) masked.push_back(j);
    }
  }
  for (std::size_t j : masked) {
    if (j >= design.m() || design.levels[j] == 0.0) throw InvalidInput("masked level must be a nonzero design level");
  }
  if (design.m() - 1 < static_cast<std::size_t>(cfg.K) + 1) {
    throw IdentifiabilityError("masking one of " + std::to_string(design.m()) + " levels leaves too few for K = " +
                               std::to_string(cfg.K));
  }
  Eigen::MatrixXd truth_x;
  if (scenario) truth_x = scenario->law.draw(ecfg.truth_draws, child_seed(cfg.seed, "truth"));

  std::vector<std::vector<AteRow>> per_mask(masked.size());
  parallel_reps(static_cast<int>(masked.size()), [&](int k) {
    const std::size_t j = masked[static_cast<std::size_t>(k)];
    const double level = design.levels[j];
    std::vector<std::size_t> rest_idx;
    for (std::size_t i = 0; i < ds.size(); ++i) {
      if (ds.arm(i) != j) rest_idx.push_back(i);
    }
    const Dataset rest = ds.subset(rest_idx).with_design(design.without_level(j));
    const double halves[2] = {0.5, 0.5};
    const auto parts = split(rest, halves, child(cfg.seed, "ate-split", j));
    const Dataset& train_set = parts[0];
    const Dataset& inference = parts[1];
    const double truth = scenario ? true_ate(scenario->gt, truth_x, level).value : ground_truth_ate(ds, level).estimate;
    auto row = [&](std::string method, double est) {
      return AteRow{std::move(method), level, est, truth, std::abs(est - truth) / std::abs(truth)};
    };

    const StructuredNet net = fit_nuisance(train_set, cfg, child(cfg.seed, "ate-net", j));
    const ScoreContext ctx = score_context(rest.design(), cfg);
    auto& rows = per_mask[static_cast<std::size_t>(k)];
    rows.push_back(row("DLPT", estimate_ate(build_score_table(inference, net, ctx), level, cfg.confidence).point));
    for (BenchmarkKind kind : ecfg.benchmarks) {
      if (kind == BenchmarkKind::Uniform) continue;  // no value at a masked level
      BenchmarkConfig bc = cfg.benchmark;
      bc.seed = child(cfg.seed, "ate-benchmark", j);
      const ResponseModel model = fit(kind, train_set, bc);
      rows.push_back(row(to_string(kind), plugin_ate(model, inference.x(), level)));
    }
  });
  AteRecoveryResult result;
  for (auto& rows : per_mask) result.rows.insert(result.rows.end(), rows.begin(), rows.end());
  result.aggregates = ate_aggregates(result.rows);
  return result;
}

AteRecoveryResult ate_recovery_experiment(const Scenario& scenario, const AteRecoveryConfig& ecfg,
                                          const PipelineConfig& cfg) {
  const Dataset ds = generate(scenario.gt, ecfg.n, scenario.design, scenario.law, child_seed(cfg.seed, "data"));
  return ate_recovery_experiment(ds, &scenario, ecfg, cfg);
}

// ------------------------------------------------------------- discrete regret

MethodRow score_group_choices(const std::string& method, const std::vector<GroupRow>& groups,
                              const std::vector<double>& chosen, const std::vector<std::vector<double>>& level_values,
                              const std::vector<double>& levels) {
  MethodRow row;
  row.method = method;
  double hits = 0.0, weighted_hits = 0.0, total = 0.0, mpr_sum = 0.0;
  std::size_t mpr_count = 0;
  for (std::size_t g = 0; g < groups.size(); ++g) {
    const bool hit = std::abs(chosen[g] - groups[g].best_level) <= kLevelTolerance;
    hits += hit ? 1.0 : 0.0;
    weighted_hits += hit ? static_cast<double>(groups[g].size) : 0.0;
    total += static_cast<double>(groups[g].size);
    if (groups[g].best_value > 0.0) {
      const double v = level_values[g][level_position(levels, chosen[g])];
      mpr_sum += mean_percentage_regret(groups[g].best_value - v, groups[g].best_value);
      ++mpr_count;
    }
  }
  row.groups_scored = groups.size();
  row.accuracy = groups.empty() ? kNaN : hits / static_cast<double>(groups.size());
  row.weighted_accuracy = total > 0.0 ? weighted_hits / total : kNaN;
  row.mpr = mpr_count > 0 ? mpr_sum / static_cast<double>(mpr_count) : kNaN;
  return row;
}

DiscreteRegretResult discrete_regret_experiment(const Dataset& ds, const Scenario* scenario,
                                                const DiscreteRegretConfig& ecfg, const PipelineConfig& cfg) {
  cfg.validate();
  if (ds.empty()) throw InvalidInput("dataset is empty");
  if (ecfg.groups.empty()) throw InvalidInput("discrete regret needs a group spec");
  const Design& design = ds.design();
  const std::vector<double>& levels = design.levels;
  const std::size_t m = design.m();

  // Users are split within each group so that every group is seen in both halves.
  std::map<GroupKey, std::vector<std::size_t>> members;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    members[group_key(ds.x().col(static_cast<Eigen::Index>(i)), ecfg.groups)].push_back(i);
  }
  std::vector<std::size_t> train_idx, inf_idx;
  std::vector<std::pair<GroupKey, std::vector<std::size_t>>> inf_groups;
  std::uint64_t g_index = 0;
  for (const auto& [key, idx] : members) {
    std::vector<std::size_t> inf_local;
    if (idx.size() >= 2) {
      const double halves[2] = {0.5, 0.5};
      const auto parts = split_indices(idx.size(), halves, child(cfg.seed, "group-split", g_index));
      for (std::size_t k : parts[0]) train_idx.push_back(idx[k]);
      for (std::size_t k : parts[1]) inf_local.push_back(idx[k]);
    } else {
      train_idx.insert(train_idx.end(), idx.begin(), idx.end());
    }
    ++g_index;
    if (!inf_local.empty()) inf_groups.emplace_back(key, std::move(inf_local));
  }
  std::sort(train_idx.begin(), train_idx.end());
  std::vector<std::size_t> order;
  for (const auto& [key, idx] : inf_groups) order.insert(order.end(), idx.begin(), idx.end());
  const Dataset train_set = ds.subset(train_idx);
  const Dataset inference = ds.subset(order);

  // Group ranges within the inference set, and the true value per group and level.
  DiscreteRegretResult result;
  std::vector<std::pair<std::size_t, std::size_t>> ranges;
  std::vector<std::vector<double>> level_values;
  std::size_t offset = 0;
  for (const auto& [key, idx] : inf_groups) {
    const std::size_t begin = offset, end = offset + idx.size();
    offset = end;
    std::vector<double> values(m);
    bool keep = true;
    if (scenario) {
      const Eigen::MatrixXd xg = inference.x().middleCols(static_cast<Eigen::Index>(begin),
                                                          static_cast<Eigen::Index>(end - begin));
      for (std::size_t j = 0; j < m; ++j) {
        const std::vector<double> a(end - begin, levels[j]);
        values[j] = true_value(scenario->gt, xg, a, cfg.vp).value;
      }
    } else {
      std::vector<double> sum(m, 0.0);
      std::vector<std::size_t> count(m, 0);
      for (std::size_t i = begin; i < end; ++i) {
        sum[inference.arm(i)] += inference.y()[static_cast<Eigen::Index>(i)];
        ++count[inference.arm(i)];
      }
      for (std::size_t j = 0; j < m; ++j) {
        if (count[j] < ecfg.min_arm_count) keep = false;
        values[j] = count[j] ? cfg.vp.w * sum[j] / static_cast<double>(count[j]) - cfg.vp.c * levels[j] : kNaN;
      }
    }
    if (!keep) {
      ++result.dropped_groups;
      ranges.emplace_back(begin, begin);  // marks a dropped group
      level_values.emplace_back();
      continue;
    }
    const std::size_t best = argmax_first(values);
    result.groups.push_back(GroupRow{key, end - begin, levels[best], values[best]});
    ranges.emplace_back(begin, end);
    level_values.push_back(std::move(values));
  }
  if (result.groups.size() < 2) throw InvalidInput("discrete regret needs at least two usable groups");
  for (const auto& g : result.groups) {
    if (!(g.best_value > 0.0)) ++result.mpr_undefined_groups;
  }

  // Per kept group and level: the mean of a per-sample surface.
  auto kept_values = [&](const std::vector<std::vector<double>>& v) {
    std::vector<std::vector<double>> out;
    for (std::size_t g = 0; g < v.size(); ++g) {
      if (ranges[g].first != ranges[g].second) out.push_back(v[g]);
    }
    return out;
  };
  auto group_means = [&](const std::function<std::vector<double>(double)>& per_sample) {
    std::vector<std::vector<double>> out(ranges.size(), std::vector<double>(m, kNaN));
    for (std::size_t j = 0; j < m; ++j) {
      const std::vector<double> s = per_sample(levels[j]);
      for (std::size_t g = 0; g < ranges.size(); ++g) {
        const auto [b, e] = ranges[g];
        if (b == e) continue;
        out[g][j] = stats::mean(std::span<const double>(s).subspan(b, e - b));
      }
    }
    return kept_values(out);
  };
  auto choose = [&](const std::vector<std::vector<double>>& estimated) {
    std::vector<double> chosen;
    for (const auto& v : estimated) chosen.push_back(levels[argmax_first(v)]);
    return chosen;
  };
  const auto truth_values = kept_values(level_values);
  auto add_method = [&](const std::string& name, const std::vector<double>& chosen) {
    result.methods.push_back(score_group_choices(name, result.groups, chosen, truth_values, levels));
    result.choices[name] = chosen;
  };

  const StructuredNet net = fit_nuisance(train_set, cfg, child_seed(cfg.seed, "discrete-net"));
  const ScoreTable table = build_score_table(inference, net, score_context(design, cfg));
  add_method("DLPT", choose(group_means([&](double a) {
               return value_scores(table, std::vector<double>(inference.size(), a));
             })));

  for (BenchmarkKind kind : ecfg.benchmarks) {
    BenchmarkConfig bc = cfg.benchmark;
    bc.seed = child_seed(cfg.seed, "discrete-benchmark");
    const ResponseModel model = fit(kind, train_set, bc);
    if (kind == BenchmarkKind::Uniform) {
      add_method("UNI", std::vector<double>(result.groups.size(), std::get<UniformModel>(model.m).best_level(cfg.vp)));
      continue;
    }
    add_method(to_string(kind), choose(group_means([&](double a) {
                 const std::vector<double> t(inference.size(), a);
                 const Eigen::VectorXd p = predict(model, inference.x(), t);
                 std::vector<double> v(inference.size());
                 for (std::size_t i = 0; i < v.size(); ++i) v[i] = cfg.vp.w * p[static_cast<Eigen::Index>(i)] - cfg.vp.c * a;
                 return v;
               })));
  }

  if (ecfg.random_draws > 0) {
    MethodRow avg;
    avg.method = "random";
    avg.groups_scored = result.groups.size();
    std::vector<double> mpr, acc, wacc;
    for (int r = 0; r < ecfg.random_draws; ++r) {
      Rng rng(child(cfg.seed, "random-guess", static_cast<std::uint64_t>(r)));
      std::vector<double> chosen;
      for (std::size_t g = 0; g < result.groups.size(); ++g) chosen.push_back(levels[rng.below(m)]);
      const MethodRow row = score_group_choices("random", result.groups, chosen, truth_values, levels);
      mpr.push_back(row.mpr);
      acc.push_back(row.accuracy);
      wacc.push_back(row.weighted_accuracy);
    }
    avg.mpr = mean_of(mpr);
    avg.accuracy = mean_of(acc);
    avg.weighted_accuracy = mean_of(wacc);
    result.methods.push_back(avg);
  }
  return result;
}

DiscreteRegretResult discrete_regret_experiment(const Scenario& scenario, const DiscreteRegretConfig& ecfg,
                                                const PipelineConfig& cfg) {
  const Dataset ds = generate(scenario.gt, ecfg.n, scenario.design, scenario.law, child_seed(cfg.seed, "data"));
  return discrete_regret_experiment(ds, &scenario, ecfg, cfg);
}

// ----------------------------------------------------------- continuous regret

std::string to_string(PolicyClass c) {
  switch (c) {
    case PolicyClass::Finite: return "finite";
    case PolicyClass::Grid: return "grid";
    case PolicyClass::Linear: return "linear";
    case PolicyClass::Neural: return "neural";
  }
  return "?";
}

PolicyClass policy_class_from_string(const std::string& s) {
  for (auto c : {PolicyClass::Finite, PolicyClass::Grid, PolicyClass::Linear, PolicyClass::Neural}) {
    if (to_string(c) == s) return c;
  }
  throw InvalidInput("unknown policy class '" + s + "' (expected finite, grid, linear or neural)");
}

namespace {

ScoreTable table_subset(const ScoreTable& t, const std::vector<std::size_t>& idx) {
  ScoreTable out;
  out.vp = t.vp;
  out.t_max = t.t_max;
  out.theta.resize(t.theta.rows(), static_cast<Eigen::Index>(idx.size()));
  out.correction.resize(t.correction.rows(), static_cast<Eigen::Index>(idx.size()));
  for (std::size_t k = 0; k < idx.size(); ++k) {
    out.theta.col(static_cast<Eigen::Index>(k)) = t.theta.col(static_cast<Eigen::Index>(idx[k]));
    out.correction.col(static_cast<Eigen::Index>(k)) = t.correction.col(static_cast<Eigen::Index>(idx[k]));
  }
  return out;
}

Eigen::MatrixXd columns(const Eigen::MatrixXd& x, const std::vector<std::size_t>& idx) {
  Eigen::MatrixXd out(x.rows(), static_cast<Eigen::Index>(idx.size()));
  for (std::size_t k = 0; k < idx.size(); ++k) out.col(static_cast<Eigen::Index>(k)) = x.col(static_cast<Eigen::Index>(idx[k]));
  return out;
}

template <class T>
std::vector<T> pick(const std::vector<T>& v, const std::vector<std::size_t>& idx) {
  std::vector<T> out;
  out.reserve(idx.size());
  for (std::size_t i : idx) out.push_back(v[i]);
  return out;
}

std::vector<std::size_t> bootstrap_indices(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<std::size_t> idx(n);
  for (auto& i : idx) i = rng.below(n);
  return idx;
}

// Per-sample actions of a method within a policy class, on the learning set.
struct ClassFit {
  std::vector<double> learn_actions;  // on the learning covariates
  std::optional<Policy> policy;       // set for linear and neural classes
};

ClassFit fit_class(PolicyClass cls, const ValueSurface& surface, const Eigen::MatrixXd& x,
                   const std::vector<double>& levels, int grid_points, const PolicyLearnConfig& pcfg) {
  ClassFit out;
  switch (cls) {
    case PolicyClass::Finite: out.learn_actions = learn_finite_actions(surface, levels); break;
    case PolicyClass::Grid:
      out.learn_actions = learn_finite_actions(surface, uniform_grid(surface.t_max(), grid_points));
      break;
    case PolicyClass::Linear: out.policy = learn_linear(surface, x, pcfg).policy; break;
    case PolicyClass::Neural: out.policy = learn_neural(surface, x, pcfg).policy; break;
  }
  if (out.policy) out.learn_actions = apply_all(*out.policy, x);
  return out;
}

const char* segment_name(const Eigen::VectorXd& x, std::size_t sx, std::size_t sy) {
  const bool hx = x[static_cast<Eigen::Index>(sx)] >= 0.0, hy = x[static_cast<Eigen::Index>(sy)] >= 0.0;
  return hx ? (hy ? "HH" : "HL") : (hy ? "LH" : "LL");
}

}  // namespace

ContinuousRegretResult continuous_regret_experiment(const Scenario& scenario, const ContinuousRegretConfig& ecfg,
                                                    const PipelineConfig& cfg) {
  cfg.validate();
  if (ecfg.n_bootstrap < 1) throw InvalidInput("at least one bootstrap resample is required");
  const GroundTruth& gt = scenario.gt;
  const double t_max = scenario.design.t_max;
  const Dataset ds = generate(gt, ecfg.n, scenario.design, scenario.law, child_seed(cfg.seed, "data"));
  const double halves[2] = {0.5, 0.5};
  const auto tt = split(ds, halves, child_seed(cfg.seed, "train-test"));
  const auto ie = split(tt[1], halves, child_seed(cfg.seed, "inference-evaluation"));
  const Dataset& train_set = tt[0];
  const Dataset& inference = ie[0];
  const Dataset& evaluation = ie[1];
  const std::vector<double>& levels = scenario.design.levels;

  const StructuredNet net = fit_nuisance(train_set, cfg, child_seed(cfg.seed, "continuous-net"));
  const ScoreTable full_table = build_score_table(inference, net, score_context(scenario.design, cfg));
  std::vector<std::pair<std::string, ResponseModel>> models;
  for (BenchmarkKind kind : ecfg.benchmarks) {
    BenchmarkConfig bc = cfg.benchmark;
    bc.seed = child_seed(cfg.seed, "continuous-benchmark");
    models.emplace_back(to_string(kind), fit(kind, train_set, bc));
  }

  // In-class oracles: per-sample optima for the table classes on the inference
  // set, pointwise and linear optima on the evaluation set.
  const auto grid = uniform_grid(t_max, ecfg.grid_points);
  const auto oracle_finite = oracle_finite_actions(gt, inference.x(), levels, cfg.vp);
  const auto oracle_grid = oracle_finite_actions(gt, inference.x(), grid, cfg.vp);
  const auto oracle_neural = oracle_pointwise_actions(gt, evaluation.x(), ecfg.oracle_grid, cfg.vp);
  PolicyLearnConfig ocfg = cfg.policy;
  ocfg.seed = child_seed(cfg.seed, "oracle-linear");
  const Policy oracle_lin = oracle_linear(gt, evaluation.x(), cfg.vp, ocfg).policy;
  const auto oracle_linear_actions = apply_all(oracle_lin, evaluation.x());

  std::vector<std::string> methods{"DLPT"};
  for (const auto& [name, model] : models) methods.push_back(name);
  if (ecfg.include_oracle) methods.push_back("oracle");

  const std::size_t n_cls = ecfg.classes.size(), n_meth = methods.size();
  const int B = ecfg.n_bootstrap;
  // [b][class][method] -> (regret, mpr, segment stats)
  struct Cell {
    double regret = 0.0, mpr = kNaN;
    std::map<std::string, std::array<double, 4>> seg;  // sum action, sum oracle action, sum regret, count
  };
  std::vector<std::vector<std::vector<Cell>>> cells(B, std::vector<std::vector<Cell>>(n_cls, std::vector<Cell>(n_meth)));

  parallel_reps(B, [&](int b) {
    const auto inf_idx = B == 1 ? [&] {
      std::vector<std::size_t> v(inference.size());
      std::iota(v.begin(), v.end(), std::size_t{0});
      return v;
    }()
                                : bootstrap_indices(inference.size(), child(cfg.seed, "boot-inference", b));
    const auto eval_idx = B == 1 ? [&] {
      std::vector<std::size_t> v(evaluation.size());
      std::iota(v.begin(), v.end(), std::size_t{0});
      return v;
    }()
                                 : bootstrap_indices(evaluation.size(), child(cfg.seed, "boot-evaluation", b));
    const ScoreTable table = table_subset(full_table, inf_idx);
    const Eigen::MatrixXd x_inf = columns(inference.x(), inf_idx);
    const Eigen::MatrixXd x_eval = columns(evaluation.x(), eval_idx);
    const OrthogonalSurface dlpt_surface(table);

    for (std::size_t c = 0; c < n_cls; ++c) {
      const PolicyClass cls = ecfg.classes[c];
      const bool table_class = cls == PolicyClass::Finite || cls == PolicyClass::Grid;
      const Eigen::MatrixXd& x_reg = table_class ? x_inf : x_eval;
      std::vector<double> oracle_actions;
      if (cls == PolicyClass::Finite) oracle_actions = pick(oracle_finite, inf_idx);
      if (cls == PolicyClass::Grid) oracle_actions = pick(oracle_grid, inf_idx);
      if (cls == PolicyClass::Linear) oracle_actions = pick(oracle_linear_actions, eval_idx);
      if (cls == PolicyClass::Neural) oracle_actions = pick(oracle_neural, eval_idx);
      const double optimal = true_value(gt, x_reg, oracle_actions, cfg.vp).value;

      for (std::size_t k = 0; k < n_meth; ++k) {
        PolicyLearnConfig pcfg = cfg.policy;
        pcfg.seed = child(child(cfg.seed, "continuous-policy", static_cast<std::uint64_t>(b)), methods[k].c_str(), c);
        std::vector<double> actions;
        if (methods[k] == "oracle") {
          actions = oracle_actions;
        } else if (methods[k] == "UNI") {
          const auto& u = std::get<UniformModel>(models[k - 1].second.m);
          actions.assign(static_cast<std::size_t>(x_reg.cols()), u.best_level(cfg.vp));
        } else {
          std::unique_ptr<ValueSurface> model_surface;
          if (k > 0) model_surface = std::make_unique<ModelSurface>(models[k - 1].second, x_inf, cfg.vp, t_max);
          const ValueSurface& surface = k == 0 ? static_cast<const ValueSurface&>(dlpt_surface) : *model_surface;
          const ClassFit f = fit_class(cls, surface, x_inf, levels, ecfg.grid_points, pcfg);
          actions = table_class ? f.learn_actions : apply_all(*f.policy, x_eval);
        }
        const RegretReport rr = regret_of_actions(gt, x_reg, actions, cfg.vp, optimal);
        Cell& cell = cells[b][c][k];
        cell.regret = rr.regret;
        cell.mpr = rr.mpr ? *rr.mpr : kNaN;
        const Eigen::VectorXd p_act = gt.prob(x_reg, actions);
        const Eigen::VectorXd p_or = gt.prob(x_reg, oracle_actions);
        for (Eigen::Index i = 0; i < x_reg.cols(); ++i) {
          const auto ui = static_cast<std::size_t>(i);
          auto& s = cell.seg[segment_name(x_reg.col(i), ecfg.segment_x, ecfg.segment_y)];
          const double vi = cfg.vp.w * p_act[i] - cfg.vp.c * actions[ui];
          const double oi = cfg.vp.w * p_or[i] - cfg.vp.c * oracle_actions[ui];
          s[0] += actions[ui];
          s[1] += oracle_actions[ui];
          s[2] += oi - vi;
          s[3] += 1.0;
        }
      }
    }
  });

  ContinuousRegretResult result;
  for (std::size_t c = 0; c < n_cls; ++c) {
    std::vector<double> dlpt_mpr;
    for (int b = 0; b < B; ++b) dlpt_mpr.push_back(cells[b][c][0].mpr);
    for (std::size_t k = 0; k < n_meth; ++k) {
      std::vector<double> mpr, reg;
      for (int b = 0; b < B; ++b) {
        mpr.push_back(cells[b][c][k].mpr);
        reg.push_back(cells[b][c][k].regret);
      }
      ClassMethodRow row{to_string(ecfg.classes[c]), methods[k], mean_of(mpr), sd_of(mpr), mean_of(reg), 1.0};
      if (k > 0) {
        row.p_value = B >= 2 ? stats::paired_t_p_value(dlpt_mpr, mpr) : kNaN;
      }
      result.rows.push_back(row);
      result.resample_mpr[row.policy_class + "/" + row.method] = mpr;

      for (const char* seg : {"LL", "LH", "HL", "HH"}) {
        std::array<double, 4> tot{};
        for (int b = 0; b < B; ++b) {
          const auto it = cells[b][c][k].seg.find(seg);
          if (it == cells[b][c][k].seg.end()) continue;
          for (int q = 0; q < 4; ++q) tot[q] += it->second[q];
        }
        if (tot[3] == 0.0) continue;
        SegmentRow s{row.policy_class, methods[k], seg, tot[0] / tot[3], tot[1] / tot[3], 0.0, tot[2] / tot[3]};
        s.action_ape = s.oracle_action != 0.0 ? std::abs(s.mean_action - s.oracle_action) / s.oracle_action : kNaN;
        result.segments.push_back(s);
      }
    }
  }
  return result;
}

// --------------------------------------------------------------------- scaling

double neural_pipeline_regret(const Scenario& scenario, std::size_t n, const Eigen::MatrixXd& validation_x,
                              double optimal_value, const PipelineConfig& cfg, std::uint64_t seed) {
  const Dataset ds = generate(scenario.gt, n, scenario.design, scenario.law, child_seed(seed, "data"));
  const double halves[2] = {0.5, 0.5};
  const auto parts = split(ds, halves, child_seed(seed, "split"));
  const StructuredNet net = fit_nuisance(parts[0], cfg, child_seed(seed, "nuisance"));
  const ScoreTable table = build_score_table(parts[1], net, score_context(scenario.design, cfg));
  PolicyLearnConfig pcfg = cfg.policy;
  pcfg.seed = child_seed(seed, "policy");
  const LearnResult learned = learn_neural(OrthogonalSurface(table), parts[1].x(), pcfg);
  const auto actions = apply_all(learned.policy, validation_x);
  return optimal_value - true_value(scenario.gt, validation_x, actions, cfg.vp).value;
}

namespace {

CurveRow curve_row(double x, std::vector<double> values) {
  CurveRow r;
  r.x = x;
  r.mean = mean_of(values);
  r.sd = sd_of(values);
  r.n_reps = values.size();
  r.values = std::move(values);
  return r;
}

struct Validation {
  Eigen::MatrixXd x;
  double optimal = 0.0;
};

Validation validation_set(const Scenario& scenario, std::size_t n, int oracle_grid, const PipelineConfig& cfg) {
  Validation v;
  v.x = scenario.law.draw(n, child_seed(cfg.seed, "validation"));
  const auto best = oracle_pointwise_actions(scenario.gt, v.x, oracle_grid, cfg.vp);
  v.optimal = true_value(scenario.gt, v.x, best, cfg.vp).value;
  return v;
}

}  // namespace

ScalingResult scaling_experiment(const Scenario& scenario, const ScalingConfig& ecfg, const PipelineConfig& cfg) {
  cfg.validate();
  if (ecfg.n_grid.size() < 3) throw InvalidInput("scaling needs at least three sample sizes");
  if (ecfg.reps < 1) throw InvalidInput("at least one replication is required");
  const Validation val = validation_set(scenario, ecfg.validation_n, ecfg.oracle_grid, cfg);
  const std::size_t G = ecfg.n_grid.size();
  const int R = ecfg.reps;
  std::vector<double> regrets(G * static_cast<std::size_t>(R));
  parallel_reps(static_cast<int>(G) * R, [&](int job) {
    const std::size_t g = static_cast<std::size_t>(job / R);
    const int r = job % R;
    const std::size_t n = ecfg.n_grid[g];
    regrets[static_cast<std::size_t>(job)] =
        neural_pipeline_regret(scenario, n, val.x, val.optimal, cfg, child(child(cfg.seed, "scaling", n), "rep", r));
  });
  ScalingResult result;
  result.optimal_value = val.optimal;
  std::vector<double> xs, ys;
  for (std::size_t g = 0; g < G; ++g) {
    std::vector<double> v(regrets.begin() + static_cast<std::ptrdiff_t>(g * R),
                          regrets.begin() + static_cast<std::ptrdiff_t>((g + 1) * R));
    result.rows.push_back(curve_row(static_cast<double>(ecfg.n_grid[g]), std::move(v)));
    xs.push_back(result.rows.back().x);
    ys.push_back(result.rows.back().mean);
  }
  const bool positive = std::all_of(ys.begin(), ys.end(), [](double y) { return y > 0.0; });
  result.slope = positive ? stats::log_log_slope(xs, ys) : kNaN;
  return result;
}

// ---------------------------------------------------------------------- sweeps

SweepResult k_sweep(const Scenario& scenario, const std::vector<int>& Ks, const SweepConfig& ecfg,
                    const PipelineConfig& cfg) {
  cfg.validate();
  if (Ks.empty()) throw InvalidInput("K list is empty");
  for (int K : Ks) {
    if (K < 0 || static_cast<std::size_t>(K) + 1 > scenario.design.m()) {
      throw IdentifiabilityError("K = " + std::to_string(K) + " needs at least K+1 design levels");
    }
  }
  const Validation val = validation_set(scenario, ecfg.validation_n, ecfg.oracle_grid, cfg);
  const int S = ecfg.seeds;
  std::vector<double> regrets(Ks.size() * static_cast<std::size_t>(S));
  parallel_reps(static_cast<int>(Ks.size()) * S, [&](int job) {
    const std::size_t k = static_cast<std::size_t>(job / S);
    PipelineConfig c = cfg;
    c.K = Ks[k];
    // The same data and split for every K within a seed.
    regrets[static_cast<std::size_t>(job)] =
        neural_pipeline_regret(scenario, ecfg.n, val.x, val.optimal, c, child(cfg.seed, "sweep-seed", job % S));
  });
  SweepResult result;
  result.optimal_value = val.optimal;
  for (std::size_t k = 0; k < Ks.size(); ++k) {
    result.rows.push_back(curve_row(Ks[k], std::vector<double>(regrets.begin() + static_cast<std::ptrdiff_t>(k * S),
                                                               regrets.begin() + static_cast<std::ptrdiff_t>((k + 1) * S))));
  }
  return result;
}

SweepResult coverage_sweep(const Scenario& scenario, const std::vector<Design>& designs, const SweepConfig& ecfg,
                           const PipelineConfig& cfg) {
  cfg.validate();
  if (designs.empty()) throw InvalidInput("span list is empty");
  for (const auto& d : designs) {
    d.validate();
    if (d.t_max != scenario.design.t_max) throw InvalidInput("every span must share the scenario's t_max");
  }
  const Validation val = validation_set(scenario, ecfg.validation_n, ecfg.oracle_grid, cfg);
  const int S = ecfg.seeds;
  std::vector<double> regrets(designs.size() * static_cast<std::size_t>(S));
  parallel_reps(static_cast<int>(designs.size()) * S, [&](int job) {
    const std::size_t k = static_cast<std::size_t>(job / S);
    Scenario sc{scenario.gt, designs[k], scenario.law};
    regrets[static_cast<std::size_t>(job)] =
        neural_pipeline_regret(sc, ecfg.n, val.x, val.optimal, cfg, child(cfg.seed, "sweep-seed", job % S));
  });
  SweepResult result;
  result.optimal_value = val.optimal;
  for (std::size_t k = 0; k < designs.size(); ++k) {
    result.rows.push_back(curve_row(designs[k].levels.back(),
                                    std::vector<double>(regrets.begin() + static_cast<std::ptrdiff_t>(k * S),
                                                        regrets.begin() + static_cast<std::ptrdiff_t>((k + 1) * S))));
  }
  return result;
}

// --------------------------------------------------------------------- reports

namespace {
std::string csv_cell(const Json& v) {
  if (v.is_string()) {
    const auto s = v.get<std::string>();
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string q = "\"";
    for (char ch : s) q += ch == '"' ? std::string("\"\"") : std::string(1, ch);
    return q + "\"";
  }
  if (v.is_null()) return "";
  return v.dump();
}
}  // namespace

std::string MetricsReport::to_csv() const {
  std::string out;
  for (std::size_t c = 0; c < columns.size(); ++c) out += (c ? "," : "") + columns[c];
  out += "\n";
  for (const auto& row : rows) {
    for (std::size_t c = 0; c < row.size(); ++c) out += (c ? "," : "") + csv_cell(row[c]);
    out += "\n";
  }
  return out;
}

Json MetricsReport::to_json() const {
  Json table = Json::array();
  for (const auto& row : rows) {
    Json obj = Json::object();
    for (std::size_t c = 0; c < columns.size() && c < row.size(); ++c) obj[columns[c]] = row[c];
    table.push_back(obj);
  }
  return Json{{"experiment", experiment}, {"metadata", metadata}, {"rows", table}, {"aggregates", aggregates}};
}

Json run_metadata(const PipelineConfig& cfg, std::size_t n) {
  return Json{{"seed", cfg.seed}, {"n", n}, {"K", cfg.K}, {"loss", to_string(cfg.train.loss)},
              {"config_hash", config_hash(cfg)}};
}

MetricsReport to_report(const AteRecoveryResult& r, const PipelineConfig& cfg, std::size_t n) {
  MetricsReport rep{"ate-recovery", run_metadata(cfg, n), {"method", "level", "estimate", "truth", "ape"}, {}};
  for (const auto& row : r.rows) {
    rep.rows.push_back({row.method, row.level, number(row.estimate), number(row.truth), number(row.ape)});
  }
  for (const auto& [m, a] : r.aggregates) {
    rep.aggregates[m] = Json{{"mape", number(a.mape)}, {"mse", number(a.mse)}, {"mae", number(a.mae)},
                             {"count", a.count}};
  }
  return rep;
}

MetricsReport to_report(const DiscreteRegretResult& r, const PipelineConfig& cfg, std::size_t n) {
  MetricsReport rep{"discrete-regret", run_metadata(cfg, n), {"method", "mpr", "accuracy", "weighted_accuracy", "groups"}, {}};
  for (const auto& m : r.methods) {
    rep.rows.push_back({m.method, number(m.mpr), number(m.accuracy), number(m.weighted_accuracy), m.groups_scored});
  }
  Json groups = Json::array();
  for (const auto& g : r.groups) {
    groups.push_back(Json{{"group", g.key}, {"size", g.size}, {"best_level", g.best_level},
                          {"best_value", g.best_value}});
  }
  rep.aggregates = Json{{"groups", groups}, {"dropped_groups", r.dropped_groups},
                        {"mpr_undefined_groups", r.mpr_undefined_groups}, {"choices", r.choices}};
  return rep;
}

MetricsReport to_report(const ContinuousRegretResult& r, const PipelineConfig& cfg, std::size_t n) {
  MetricsReport rep{"continuous-regret", run_metadata(cfg, n),
                    {"class", "method", "mean_mpr", "sd_mpr", "mean_regret", "p_value_vs_dlpt"}, {}};
  for (const auto& row : r.rows) {
    rep.rows.push_back({row.policy_class, row.method, number(row.mean_mpr), number(row.sd_mpr),
                        number(row.mean_regret), number(row.p_value)});
  }
  Json segs = Json::array();
  for (const auto& s : r.segments) {
    segs.push_back(Json{{"class", s.policy_class}, {"method", s.method}, {"segment", s.segment},
                        {"mean_action", number(s.mean_action)}, {"oracle_action", number(s.oracle_action)},
                        {"action_ape", number(s.action_ape)}, {"regret", number(s.regret)}});
  }
  rep.aggregates = Json{{"segments", segs}, {"p_value_test", "paired t over bootstrap MPR"}};
  return rep;
}

namespace {
MetricsReport curve_report(const std::string& experiment, const std::string& x_name,
                           const std::vector<CurveRow>& rows, Json metadata) {
  MetricsReport rep{experiment, std::move(metadata), {x_name, "mean", "sd", "n_reps"}, {}};
  for (const auto& r : rows) rep.rows.push_back({r.x, number(r.mean), number(r.sd), r.n_reps});
  return rep;
}
}  // namespace

MetricsReport to_report(const ScalingResult& r, const PipelineConfig& cfg) {
  MetricsReport rep = curve_report("scaling", "n", r.rows, run_metadata(cfg, 0));
  rep.aggregates = Json{{"log_log_slope", number(r.slope)}, {"optimal_value", r.optimal_value}};
  return rep;
}

MetricsReport to_report(const SweepResult& r, const std::string& experiment, const PipelineConfig& cfg,
                        std::size_t n) {
  MetricsReport rep = curve_report(experiment, experiment == "k-sweep" ? "K" : "span", r.rows, run_metadata(cfg, n));
  rep.aggregates = Json{{"optimal_value", r.optimal_value}};
  return rep;
}

MetricsReport to_report(const ProbeResult& r, const PipelineConfig& cfg, std::size_t n) {
  MetricsReport rep{"orthogonality-probe", run_metadata(cfg, n), {"epsilon", "orthogonal_shift", "plugin_shift"}, {}};
  for (const auto& row : r.rows) rep.rows.push_back({row.epsilon, row.orthogonal_shift, row.plugin_shift});
  rep.aggregates = Json{{"orthogonal_slope", r.orthogonal_slope}, {"plugin_slope", r.plugin_slope}};
  return rep;
}

std::string curve_csv(const std::vector<CurveRow>& rows) {
  MetricsReport rep{"curve", Json::object(), {"x", "mean", "sd", "n_reps"}, {}};
  for (const auto& r : rows) rep.rows.push_back({r.x, number(r.mean), number(r.sd), r.n_reps});
  return rep.to_csv();
}

}  // namespace dlpt
