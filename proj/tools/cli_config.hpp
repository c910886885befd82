#pragma once

// Run configuration for the dlpt command line: JSON file, dotted-key overrides,
// defaults, validation and the resolved snapshot written next to outputs.

#include "dlpt/evaluation.hpp"
#include "dlpt/serialize.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace dlpt::cli {

enum class Mode { Synthetic, Data };

struct ExperimentSettings {
  std::string name;
  std::size_t n = 20000;
  // ate-recovery
  std::vector<std::size_t> masked_levels;
  std::vector<BenchmarkKind> benchmarks;  // empty means the experiment default
  std::size_t truth_draws = 200000;
  // discrete-regret
  GroupSpec groups = default_groups();
  int random_draws = 1000;
  std::size_t min_arm_count = 50;
  // continuous-regret
  std::vector<PolicyClass> classes = {PolicyClass::Finite, PolicyClass::Grid, PolicyClass::Linear,
                                      PolicyClass::Neural};
  int n_bootstrap = 30;
  int grid_points = 101;
  bool include_oracle = false;
  // scaling and sweeps
  std::vector<std::size_t> n_grid = {1000, 5000, 10000, 20000};
  int reps = 30;
  int seeds = 10;
  std::vector<int> Ks = {1, 2, 3, 4};
  std::vector<Design> spans;  // rescaled; empty means coverage_designs()
  std::size_t validation_n = 20000;
  int oracle_grid = 1001;
  // orthogonality-probe
  std::vector<double> epsilons = default_probe_epsilons();
  int directions = 10;
  bool probe_ate = false;
  double probe_action = 0.358;  // rescaled units; also the ATE level when probe_ate
  bool conditional = true;
};

struct RunConfig {
  Mode mode = Mode::Synthetic;
  std::uint64_t seed = 0;
  std::filesystem::path out = "out";
  std::optional<std::filesystem::path> data;  // CSV in raw treatment units
  std::optional<std::filesystem::path> net;
  Design raw_design = default_design();  // levels and t_max in raw units
  Json truth = Json{{"kind", "sigmoid-poly"}, {"d", 4}};
  std::size_t n = 20000;
  double split_fraction = 0.5;  // share of the data used to fit the nuisance net
  PipelineConfig pipeline;
  std::string policy_class = "neural";
  int grid_points = 101;
  ExperimentSettings experiment;

  /// Design in [0, 1] units.
  Design design() const { return raw_design.rescaled(); }
  double t_scale() const { return raw_design.t_max; }
  std::filesystem::path data_path() const { return data ? *data : out / "data.csv"; }
  std::filesystem::path net_path() const { return net ? *net : out / "net.json"; }
};

/// Sets a dotted key ("train.epochs") to a value parsed as JSON, or as a plain
/// string when it does not parse.
void apply_override(Json& root, const std::string& dotted_key, const std::string& value);

/// Builds a validated config; unknown keys are rejected.
RunConfig resolve(const Json& root);

/// Fully expanded form of a config, defaults included.
Json to_json(const RunConfig& cfg);

const std::vector<std::string>& experiment_names();

}  // namespace dlpt::cli
