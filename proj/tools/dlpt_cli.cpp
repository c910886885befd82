// dlpt: generate experiments, fit the structured nuisance net, estimate policy
// values and ATEs, learn policies and run the evaluation protocols.
//
// Exit codes: 0 success, 2 config or validation error, 3 numerical failure,
// 4 I/O error, 1 anything else.

#include "cli_config.hpp"

#include "dlpt/error.hpp"
#include "dlpt/evaluation.hpp"
#include "dlpt/rng.hpp"
#include "dlpt/serialize.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <ctime>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace dlpt;
using dlpt::cli::Mode;
using dlpt::cli::RunConfig;

namespace {

struct Flags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::vector<std::string> sets;
  // subcommand options
  std::optional<std::size_t> n;
  std::string data;
  std::string net;
  std::optional<double> ate;
  std::optional<double> constant;
  std::string policy;
  std::string policy_class;
  std::string experiment;
};

std::string timestamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

RunConfig load_config(const Flags& flags) {
  Json root = Json::object();
  if (!flags.config.empty()) {
    root = parse_json(read_file(flags.config));
    if (!root.is_object()) throw InvalidInput("config file must hold a JSON object");
  }
  for (const auto& s : flags.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw InvalidInput("--set expects key=value, got '" + s + "'");
    cli::apply_override(root, s.substr(0, eq), s.substr(eq + 1));
  }
  if (flags.seed) root["seed"] = *flags.seed;
  if (!flags.out.empty()) root["out"] = flags.out;
  if (flags.n) root["n"] = *flags.n;
  if (!flags.data.empty()) root["data"] = flags.data;
  if (!flags.net.empty()) root["net"] = flags.net;
  if (!flags.policy_class.empty()) root["policy"]["class"] = flags.policy_class;
  if (!flags.experiment.empty()) root["experiment"]["name"] = flags.experiment;
  return cli::resolve(root);
}

// Collects outputs of one command and writes the config snapshot and the
// timestamped metadata sidecar next to them.
class Run {
 public:
  Run(std::string command, RunConfig cfg) : command_(std::move(command)), cfg_(std::move(cfg)), started_(timestamp()) {
    fs::create_directories(cfg_.out);
    write_file_atomic(cfg_.out / (command_ + ".config.json"), cli::to_json(cfg_).dump(2) + "\n");
  }

  const RunConfig& cfg() const { return cfg_; }

  void write(const std::string& name, const std::string& content) {
    write_file_atomic(cfg_.out / name, content);
    outputs_.push_back(name);
  }
  void write(const std::string& name, const Json& j) { write(name, j.dump(2) + "\n"); }
  void note(const std::string& name) { outputs_.push_back(name); }

  void finish() {
    const Json meta{{"command", command_},
                    {"started", started_},
                    {"finished", timestamp()},
                    {"seed", cfg_.seed},
                    {"config_hash", config_hash(cfg_.pipeline)},
                    {"outputs", outputs_}};
    write_file_atomic(cfg_.out / (command_ + ".meta.json"), meta.dump(2) + "\n");
    for (const auto& o : outputs_) std::cout << (cfg_.out / o).string() << "\n";
  }

 private:
  std::string command_;
  RunConfig cfg_;
  std::string started_;
  std::vector<std::string> outputs_;
};

GroundTruth truth_of(const RunConfig& cfg) {
  if (cfg.mode != Mode::Synthetic) throw InvalidInput("this command needs mode = synthetic");
  return ground_truth_from_json(cfg.truth);
}

Dataset load_data(const RunConfig& cfg) {
  const Dataset ds = read_csv(cfg.data_path(), cfg.design(), cfg.t_scale());
  if (ds.empty()) throw InvalidInput("dataset " + cfg.data_path().string() + " has no rows");
  return ds;
}

// Nuisance-fit part and inference part, the same split for fit, estimate and learn.
std::vector<Dataset> stage_split(const Dataset& ds, const RunConfig& cfg) {
  const double fr[2] = {cfg.split_fraction, 1.0 - cfg.split_fraction};
  return split(ds, fr, child_seed(cfg.seed, "stage-split"));
}

StructuredNet load_net(const RunConfig& cfg) {
  const StructuredNet net = structured_net_from_json(parse_json(read_file(cfg.net_path())));
  if (net.degree() != cfg.pipeline.K) {
    throw InvalidInput("net has K = " + std::to_string(net.degree()) + " but the config has K = " +
                       std::to_string(cfg.pipeline.K));
  }
  return net;
}

void cmd_generate(const Flags& flags) {
  Run run("generate", load_config(flags));
  const RunConfig& cfg = run.cfg();
  const GroundTruth gt = truth_of(cfg);
  const Dataset ds = generate(gt, cfg.n, cfg.design(), CovariateLaw::uniform(gt.dim()), child_seed(cfg.seed, "generate"));
  write_csv(cfg.out / "data.csv", ds, cfg.t_scale());
  run.note("data.csv");
  run.write("design.json", to_json(cfg.raw_design));
  run.write("truth.json", to_json(gt));
  run.finish();
}

void cmd_fit(const Flags& flags) {
  Run run("fit", load_config(flags));
  const RunConfig& cfg = run.cfg();
  const auto parts = stage_split(load_data(cfg), cfg);
  TrainResult tr;
  const StructuredNet net = fit_nuisance(parts[0], cfg.pipeline, child_seed(cfg.seed, "fit"), &tr);
  run.write("net.json", to_json(net));
  run.write("history.csv", history_csv(tr.history));
  run.write("fit.json", Json{{"K", cfg.pipeline.K},
                             {"loss", to_string(cfg.pipeline.train.loss)},
                             {"n_fit", parts[0].size()},
                             {"n_inference", parts[1].size()},
                             {"epochs", tr.history.empty() ? 0 : tr.history.back().epoch},
                             {"best_epoch", tr.best_epoch},
                             {"initial_val_loss", tr.initial_val_loss},
                             {"best_val_loss", tr.best_val_loss}});
  run.finish();
}

void cmd_estimate(const Flags& flags) {
  Run run("estimate", load_config(flags));
  const RunConfig& cfg = run.cfg();
  const int targets = (flags.ate ? 1 : 0) + (flags.constant ? 1 : 0) + (flags.policy.empty() ? 0 : 1);
  if (targets != 1) throw InvalidInput("estimate needs exactly one of --ate, --constant or --policy");
  const Dataset ds = load_data(cfg);

  std::optional<Policy> policy;
  if (flags.constant) policy = Policy{ConstantPolicy{*flags.constant / cfg.t_scale()}, 1.0};
  if (!flags.policy.empty()) policy = policy_from_json(parse_json(read_file(flags.policy)));
  const double level = flags.ate ? *flags.ate / cfg.t_scale() : 0.0;

  ValueEstimate est;
  if (cfg.pipeline.cross_fit) {
    est = policy ? cross_fit_value(ds, *policy, cfg.pipeline) : cross_fit_ate(ds, level, cfg.pipeline);
  } else {
    const auto parts = stage_split(ds, cfg);
    const StructuredNet net = load_net(cfg);
    const ScoreContext ctx = score_context(cfg.design(), cfg.pipeline);
    est = policy ? estimate_value(parts[1], *policy, net, ctx, cfg.pipeline.confidence)
                 : estimate_ate(parts[1], level, net, ctx, cfg.pipeline.confidence);
  }
  Json j = to_json(est);
  j["standard_error"] = est.standard_error();
  if (flags.ate) j["level"] = *flags.ate;
  run.write("estimate.json", j);
  run.finish();
}

void cmd_learn(const Flags& flags) {
  Run run("learn", load_config(flags));
  const RunConfig& cfg = run.cfg();
  const auto parts = stage_split(load_data(cfg), cfg);
  const Dataset& inference = parts[1];
  const StructuredNet net = load_net(cfg);
  const ScoreContext ctx = score_context(cfg.design(), cfg.pipeline);
  PolicyLearnConfig pcfg = cfg.pipeline.policy;
  pcfg.seed = child_seed(cfg.seed, "learn");

  Json summary{{"class", cfg.policy_class}, {"n_inference", inference.size()}};
  Policy policy;
  if (cfg.policy_class == "finite") {
    policy = learn_finite(inference, net, ctx, cfg.design().levels);
  } else if (cfg.policy_class == "grid") {
    policy = learn_grid(inference, net, ctx, cfg.grid_points);
  } else {
    const LearnResult r = cfg.policy_class == "linear" ? learn_linear(inference, net, ctx, pcfg)
                                                       : learn_neural(inference, net, ctx, pcfg);
    policy = r.policy;
    summary["objective"] = r.objective;
    summary["selection_objective"] = r.selection_objective;
    summary["history"] = r.history;
    summary["restart_objectives"] = r.restart_objectives;
    summary["epochs"] = r.epochs;
  }
  // In-sample value on the inference half; an optimistic figure for a learned policy.
  summary["in_sample_value"] = to_json(estimate_value(inference, policy, net, ctx, cfg.pipeline.confidence));
  summary["t_scale"] = cfg.t_scale();
  run.write("policy.json", to_json(policy));
  run.write("learn.json", summary);
  run.finish();
}

void write_report(Run& run, const std::string& name, const MetricsReport& rep) {
  run.write(name + ".csv", rep.to_csv());
  run.write(name + ".json", rep.to_json());
}

void cmd_evaluate(const Flags& flags) {
  Flags f = flags;
  // A dataset on the command line means the protocol runs on it.
  if (!f.data.empty()) f.sets.push_back("mode=data");
  Run run("evaluate", load_config(f));
  const RunConfig& cfg = run.cfg();
  const auto& e = cfg.experiment;
  if (e.name.empty()) throw InvalidInput("no experiment selected (use --experiment)");
  const PipelineConfig& p = cfg.pipeline;

  std::optional<Scenario> scenario;
  std::optional<Dataset> data;
  if (cfg.mode == Mode::Synthetic) {
    GroundTruth gt = truth_of(cfg);
    const std::size_t d = gt.dim();
    scenario.emplace(Scenario{std::move(gt), cfg.design(), CovariateLaw::uniform(d)});
  } else {
    data = load_data(cfg);
  }
  auto need_truth = [&] {
    if (!scenario) throw InvalidInput("experiment '" + e.name + "' needs mode = synthetic");
    return *scenario;
  };

  if (e.name == "ate-recovery") {
    AteRecoveryConfig ec;
    ec.n = e.n;
    ec.masked_levels = e.masked_levels;
    if (!e.benchmarks.empty()) ec.benchmarks = e.benchmarks;
    ec.truth_draws = e.truth_draws;
    const auto r = scenario ? ate_recovery_experiment(*scenario, ec, p) : ate_recovery_experiment(*data, nullptr, ec, p);
    write_report(run, e.name, to_report(r, p, scenario ? e.n : data->size()));
  } else if (e.name == "discrete-regret") {
    DiscreteRegretConfig ec;
    ec.n = e.n;
    ec.groups = e.groups;
    if (!e.benchmarks.empty()) ec.benchmarks = e.benchmarks;
    ec.random_draws = e.random_draws;
    ec.min_arm_count = e.min_arm_count;
    const auto r =
        scenario ? discrete_regret_experiment(*scenario, ec, p) : discrete_regret_experiment(*data, nullptr, ec, p);
    if (r.dropped_groups > 0) std::cerr << "warning: dropped " << r.dropped_groups << " groups with a thin arm\n";
    write_report(run, e.name, to_report(r, p, scenario ? e.n : data->size()));
  } else if (e.name == "continuous-regret") {
    ContinuousRegretConfig ec;
    ec.n = e.n;
    ec.classes = e.classes;
    if (!e.benchmarks.empty()) ec.benchmarks = e.benchmarks;
    ec.n_bootstrap = e.n_bootstrap;
    ec.grid_points = e.grid_points;
    ec.oracle_grid = e.oracle_grid;
    ec.include_oracle = e.include_oracle;
    write_report(run, e.name, to_report(continuous_regret_experiment(need_truth(), ec, p), p, e.n));
  } else if (e.name == "scaling") {
    ScalingConfig ec{e.n_grid, e.reps, e.validation_n, e.oracle_grid};
    const auto r = scaling_experiment(need_truth(), ec, p);
    write_report(run, e.name, to_report(r, p));
    run.write(e.name + "_curve.csv", curve_csv(r.rows));
  } else if (e.name == "k-sweep" || e.name == "coverage-sweep") {
    SweepConfig ec{e.n, e.seeds, e.validation_n, e.oracle_grid};
    const auto r = e.name == "k-sweep"
                       ? k_sweep(need_truth(), e.Ks, ec, p)
                       : coverage_sweep(need_truth(), e.spans.empty() ? coverage_designs() : e.spans, ec, p);
    write_report(run, e.name, to_report(r, e.name, p, e.n));
    run.write(e.name + "_curve.csv", curve_csv(r.rows));
  } else if (e.name == "orthogonality-probe") {
    const Scenario sc = need_truth();
    if (!sc.gt.has_theta()) throw InvalidInput("the orthogonality probe needs a sigmoid-poly truth");
    const Dataset ds = generate(sc.gt, e.n, sc.design, sc.law, child_seed(cfg.seed, "probe-data"));
    ProbeTarget target;
    target.ate = e.probe_ate;
    target.level = e.probe_action;
    if (!e.probe_ate) target.actions.assign(ds.size(), e.probe_action);
    if (e.conditional) {
      target.level_probs.resize(static_cast<Eigen::Index>(sc.design.m()), static_cast<Eigen::Index>(ds.size()));
      for (std::size_t j = 0; j < sc.design.m(); ++j) {
        const std::vector<double> a(ds.size(), sc.design.levels[j]);
        target.level_probs.row(static_cast<Eigen::Index>(j)) = sc.gt.prob(ds.x(), a).transpose();
      }
    }
    const Eigen::MatrixXd theta_star = sc.gt.theta(ds.x());
    if (theta_star.rows() != p.K + 1) throw InvalidInput("K must equal the truth's polynomial degree for the probe");
    const auto r = orthogonality_probe(ds, target, theta_star, score_context(sc.design, p), e.epsilons, e.directions,
                                       child_seed(cfg.seed, "probe"));
    write_report(run, e.name, to_report(r, p, e.n));
  }
  run.finish();
}

int exit_code_for(const std::exception& ex) {
  if (dynamic_cast<const InvalidInput*>(&ex)) return 2;
  if (dynamic_cast<const NumericalError*>(&ex)) return 3;
  if (dynamic_cast<const IoError*>(&ex)) return 4;
  if (dynamic_cast<const fs::filesystem_error*>(&ex)) return 4;
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Deep learning policy targeting from discrete-level randomized experiments"};
  app.require_subcommand(1);
  app.fallthrough();
  Flags flags;
  app.add_option("--config", flags.config, "JSON run config");
  app.add_option("--seed", flags.seed, "Root seed; every random stream derives from it");
  app.add_option("--out", flags.out, "Output directory");
  app.add_option("--set", flags.sets, "Config override key=value (dotted keys, JSON values)")->allow_extra_args(false);

  auto* gen = app.add_subcommand("generate", "Simulate a randomized experiment from the configured truth");
  gen->add_option("--n", flags.n, "Number of samples");

  auto* fit = app.add_subcommand("fit", "Fit the structured nuisance net on the fitting part of the data");
  fit->add_option("--data", flags.data, "Dataset CSV (default <out>/data.csv)");

  auto* est = app.add_subcommand("estimate", "Orthogonal estimate of a policy value or an ATE");
  est->add_option("--data", flags.data, "Dataset CSV (default <out>/data.csv)");
  est->add_option("--net", flags.net, "Nuisance net JSON (default <out>/net.json)");
  est->add_option("--ate", flags.ate, "Treatment level (raw units) whose ATE against 0 is estimated");
  est->add_option("--constant", flags.constant, "Value of the constant policy at this treatment (raw units)");
  est->add_option("--policy", flags.policy, "Value of the policy in this JSON file");

  auto* learn = app.add_subcommand("learn", "Learn a policy by maximizing the orthogonal value estimate");
  learn->add_option("--data", flags.data, "Dataset CSV (default <out>/data.csv)");
  learn->add_option("--net", flags.net, "Nuisance net JSON (default <out>/net.json)");
  learn->add_option("--class", flags.policy_class, "Policy class")
      ->check(CLI::IsMember({"finite", "grid", "linear", "neural"}));

  auto* eval = app.add_subcommand("evaluate", "Run an evaluation protocol and write its report");
  eval->alias("experiment");
  eval->add_option("name,--experiment", flags.experiment, "Experiment name")
      ->check(CLI::IsMember(cli::experiment_names()));
  eval->add_option("--data", flags.data, "Dataset CSV for data mode");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (gen->parsed()) cmd_generate(flags);
    if (fit->parsed()) cmd_fit(flags);
    if (est->parsed()) cmd_estimate(flags);
    if (learn->parsed()) cmd_learn(flags);
    if (eval->parsed()) cmd_evaluate(flags);
  } catch (const std::exception& ex) {
    std::cerr << "dlpt: error: " << ex.what() << "\n";
    return exit_code_for(ex);
  }
  return 0;
}
