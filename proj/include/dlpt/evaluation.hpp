#pragma once

// Experiment protocols and metrics: masked-arm ATE recovery, discrete-class
// regret over covariate groups, continuous-class regret with bootstrap, regret
// scaling in n, and sweeps over the polynomial degree and treatment coverage.

#include "dlpt/benchmarks.hpp"
#include "dlpt/dgp.hpp"
#include "dlpt/learners.hpp"
#include "dlpt/nets.hpp"
#include "dlpt/orthogonal.hpp"
#include "dlpt/serialize.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace dlpt {

struct PipelineConfig {
  int K = 3;
  ValueParams vp;
  std::vector<int> hidden = {64, 32, 8};
  TrainConfig train;
  bool standardize = false;
  double ridge = 1e-8;
  double confidence = 0.95;
  PolicyLearnConfig policy;
  BenchmarkConfig benchmark;
  bool cross_fit = false;  // optional two-fold variant
  std::uint64_t seed = 0;

  void validate() const;
};

Json to_json(const PipelineConfig& cfg);
/// Hex FNV-1a hash of the canonical JSON form.
std::string config_hash(const PipelineConfig& cfg);

ScoreContext score_context(const Design& design, const PipelineConfig& cfg);
StructuredNet fit_nuisance(const Dataset& train, const PipelineConfig& cfg, std::uint64_t seed,
                           TrainResult* result = nullptr);

/// Two-fold cross-fitting: each fold is scored by a net fitted on the other.
ValueEstimate cross_fit_value(const Dataset& ds, const Policy& policy, const PipelineConfig& cfg);
ValueEstimate cross_fit_ate(const Dataset& ds, double level, const PipelineConfig& cfg);

/// Synthetic setting: truth, randomization design and covariate law.
struct Scenario {
  GroundTruth gt;
  Design design;
  CovariateLaw law;
};

/// Five levels {0, .178, .358, .538, .718} with equal probabilities on [0, 1].
Design default_design();
/// Level sets of the coverage sweep for spans [0, .25], [0, .5], [0, .75], [0, 1].
std::vector<Design> coverage_designs();
/// x0 and x1 each cut at -0.5, 0, 0.5: 16 groups.
GroupSpec default_groups();

struct GroundTruthAte {
  double estimate = 0.0;
  double se = 0.0;
};

/// Difference in means between the arm at level and the arm at 0, pooled-variance SE.
GroundTruthAte ground_truth_ate(const Dataset& ds, double level);

// ---------------------------------------------------------------- ATE recovery

struct AteRow {
  std::string method;
  double level = 0.0;
  double estimate = 0.0;
  double truth = 0.0;
  double ape = 0.0;  // |estimate - truth| / |truth|
};

struct AteAggregate {
  double mape = 0.0;
  double mse = 0.0;
  double mae = 0.0;
  std::size_t count = 0;
};

struct AteRecoveryConfig {
  std::size_t n = 50000;
  std::vector<std::size_t> masked_levels;  // level indices; empty means every nonzero level
  std::vector<BenchmarkKind> benchmarks = {BenchmarkKind::LinearReg, BenchmarkKind::LogisticReg,
                                           BenchmarkKind::LogitChoice, BenchmarkKind::PlainNetwork};
  std::size_t truth_draws = 200000;
};

struct AteRecoveryResult {
  std::vector<AteRow> rows;
  std::map<std::string, AteAggregate> aggregates;
};

std::map<std::string, AteAggregate> ate_aggregates(const std::vector<AteRow>& rows);

/// Masks each chosen arm, trains on the remaining arms and compares the
/// extrapolated ATE with the truth. With a scenario the truth is the oracle ATE;
/// otherwise it is the difference in means on the data.
AteRecoveryResult ate_recovery_experiment(const Dataset& ds, const Scenario* scenario, const AteRecoveryConfig& ecfg,
                                          const PipelineConfig& cfg);
AteRecoveryResult ate_recovery_experiment(const Scenario& scenario, const AteRecoveryConfig& ecfg,
                                          const PipelineConfig& cfg);

// ------------------------------------------------------------- discrete regret

struct GroupRow {
  GroupKey key;
  std::size_t size = 0;
  double best_level = 0.0;
  double best_value = 0.0;
};

struct MethodRow {
  std::string method;
  double mpr = 0.0;
  double accuracy = 0.0;
  double weighted_accuracy = 0.0;
  std::size_t groups_scored = 0;
};

struct DiscreteRegretConfig {
  std::size_t n = 100000;
  GroupSpec groups = default_groups();
  std::vector<BenchmarkKind> benchmarks = {BenchmarkKind::LinearReg, BenchmarkKind::LogisticReg,
                                           BenchmarkKind::LogitChoice, BenchmarkKind::PlainNetwork,
                                           BenchmarkKind::Uniform};
  int random_draws = 1000;
  std::size_t min_arm_count = 50;  // data mode
};

struct DiscreteRegretResult {
  std::vector<GroupRow> groups;
  std::vector<MethodRow> methods;
  std::map<std::string, std::vector<double>> choices;  // method -> level per group
  std::size_t dropped_groups = 0;
  std::size_t mpr_undefined_groups = 0;
};

/// Scores per-group level choices against the true best levels.
MethodRow score_group_choices(const std::string& method, const std::vector<GroupRow>& groups,
                              const std::vector<double>& chosen, const std::vector<std::vector<double>>& level_values,
                              const std::vector<double>& levels);

DiscreteRegretResult discrete_regret_experiment(const Dataset& ds, const Scenario* scenario,
                                                const DiscreteRegretConfig& ecfg, const PipelineConfig& cfg);
DiscreteRegretResult discrete_regret_experiment(const Scenario& scenario, const DiscreteRegretConfig& ecfg,
                                                const PipelineConfig& cfg);

// ----------------------------------------------------------- continuous regret

enum class PolicyClass { Finite, Grid, Linear, Neural };
std::string to_string(PolicyClass c);
PolicyClass policy_class_from_string(const std::string& s);

struct ContinuousRegretConfig {
  std::size_t n = 20000;
  std::vector<PolicyClass> classes = {PolicyClass::Finite, PolicyClass::Grid, PolicyClass::Linear,
                                      PolicyClass::Neural};
  std::vector<BenchmarkKind> benchmarks = {BenchmarkKind::LinearReg, BenchmarkKind::LogisticReg,
                                           BenchmarkKind::LogitChoice, BenchmarkKind::PlainNetwork,
                                           BenchmarkKind::Uniform};
  int n_bootstrap = 30;
  int grid_points = 101;
  int oracle_grid = 1001;
  bool include_oracle = false;  // adds the in-class oracle as a method
  std::size_t segment_x = 0;   // segments split these coordinates at 0
  std::size_t segment_y = 1;
};

struct ClassMethodRow {
  std::string policy_class;
  std::string method;
  double mean_mpr = 0.0;
  double sd_mpr = 0.0;
  double mean_regret = 0.0;
  double p_value = 1.0;  // paired t-test of MPR against DLPT (1 for DLPT itself)
};

struct SegmentRow {
  std::string policy_class;
  std::string method;
  std::string segment;  // LL, LH, HL, HH
  double mean_action = 0.0;
  double oracle_action = 0.0;
  double action_ape = 0.0;
  double regret = 0.0;
};

struct ContinuousRegretResult {
  std::vector<ClassMethodRow> rows;
  std::vector<SegmentRow> segments;
  std::map<std::string, std::vector<double>> resample_mpr;  // "class/method" -> MPR per resample
};

ContinuousRegretResult continuous_regret_experiment(const Scenario& scenario, const ContinuousRegretConfig& ecfg,
                                                    const PipelineConfig& cfg);

// --------------------------------------------------------------------- scaling

struct CurveRow {
  double x = 0.0;
  double mean = 0.0;
  double sd = 0.0;
  std::size_t n_reps = 0;
  std::vector<double> values;
};

struct ScalingConfig {
  std::vector<std::size_t> n_grid = {1000, 5000, 10000, 20000};
  int reps = 30;
  std::size_t validation_n = 20000;
  int oracle_grid = 1001;
};

struct ScalingResult {
  std::vector<CurveRow> rows;
  double slope = 0.0;  // least-squares slope of log mean regret on log n
  double optimal_value = 0.0;
};

/// One pipeline run: fit on half of a fresh sample, learn a neural policy on the
/// other half, return its regret on the validation covariates.
double neural_pipeline_regret(const Scenario& scenario, std::size_t n, const Eigen::MatrixXd& validation_x,
                              double optimal_value, const PipelineConfig& cfg, std::uint64_t seed);

ScalingResult scaling_experiment(const Scenario& scenario, const ScalingConfig& ecfg, const PipelineConfig& cfg);

// ---------------------------------------------------------------------- sweeps

struct SweepConfig {
  std::size_t n = 20000;
  int seeds = 10;
  std::size_t validation_n = 20000;
  int oracle_grid = 1001;
};

struct SweepResult {
  std::vector<CurveRow> rows;
  double optimal_value = 0.0;
};

SweepResult k_sweep(const Scenario& scenario, const std::vector<int>& Ks, const SweepConfig& ecfg,
                    const PipelineConfig& cfg);
SweepResult coverage_sweep(const Scenario& scenario, const std::vector<Design>& designs, const SweepConfig& ecfg,
                           const PipelineConfig& cfg);

// --------------------------------------------------------------------- reports

struct MetricsReport {
  std::string experiment;
  Json metadata;
  std::vector<std::string> columns;
  std::vector<std::vector<Json>> rows;
  Json aggregates = Json::object();

  std::string to_csv() const;
  Json to_json() const;
};

Json run_metadata(const PipelineConfig& cfg, std::size_t n);

MetricsReport to_report(const AteRecoveryResult& r, const PipelineConfig& cfg, std::size_t n);
MetricsReport to_report(const DiscreteRegretResult& r, const PipelineConfig& cfg, std::size_t n);
MetricsReport to_report(const ContinuousRegretResult& r, const PipelineConfig& cfg, std::size_t n);
MetricsReport to_report(const ScalingResult& r, const PipelineConfig& cfg);
MetricsReport to_report(const SweepResult& r, const std::string& experiment, const PipelineConfig& cfg,
                        std::size_t n);
MetricsReport to_report(const ProbeResult& r, const PipelineConfig& cfg, std::size_t n);

/// Plot-ready CSV with columns x, mean, sd, n_reps.
std::string curve_csv(const std::vector<CurveRow>& rows);

}  // namespace dlpt
