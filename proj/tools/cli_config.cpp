#include "cli_config.hpp"

#include "dlpt/error.hpp"

#include <algorithm>
#include <set>

namespace dlpt::cli {

namespace {

// Reads fields of one JSON object and rejects keys nobody asked for.
class Fields {
 public:
  Fields(const Json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) throw InvalidInput(where_ + " must be a JSON object");
  }

  template <class T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const Json::exception&) {
      throw InvalidInput(where_ + "." + key + " has the wrong type");
    }
  }

  const Json* sub(const char* key) {
    seen_.insert(key);
    return j_.contains(key) ? &j_.at(key) : nullptr;
  }

  void finish() const {
    for (const auto& [k, v] : j_.items()) {
      if (!seen_.count(k)) throw InvalidInput("unknown config key '" + where_ + "." + k + "'");
    }
  }

 private:
  const Json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

std::string optimizer_name(OptimizerKind k) { return k == OptimizerKind::Adam ? "adam" : "sgd"; }

OptimizerKind optimizer_from(const std::string& s) {
  if (s == "adam") return OptimizerKind::Adam;
  if (s == "sgd") return OptimizerKind::Sgd;
  throw InvalidInput("unknown optimizer '" + s + "' (expected adam or sgd)");
}

void read_train(const Json& j, TrainConfig& t) {
  Fields f(j, "train");
  std::string loss = to_string(t.loss), opt = optimizer_name(t.optimizer);
  f.get("loss", loss);
  f.get("optimizer", opt);
  f.get("learning_rate", t.learning_rate);
  f.get("batch_size", t.batch_size);
  f.get("epochs", t.epochs);
  f.get("validation_fraction", t.validation_fraction);
  f.get("patience", t.patience);
  f.get("beta1", t.beta1);
  f.get("beta2", t.beta2);
  f.get("epsilon", t.epsilon);
  f.finish();
  t.loss = loss_kind_from_string(loss);
  t.optimizer = optimizer_from(opt);
}

Json train_json(const TrainConfig& t) {
  return Json{{"loss", to_string(t.loss)},
              {"optimizer", optimizer_name(t.optimizer)},
              {"learning_rate", t.learning_rate},
              {"batch_size", t.batch_size},
              {"epochs", t.epochs},
              {"validation_fraction", t.validation_fraction},
              {"patience", t.patience},
              {"beta1", t.beta1},
              {"beta2", t.beta2},
              {"epsilon", t.epsilon}};
}

std::vector<BenchmarkKind> benchmark_list(const std::vector<std::string>& names) {
  std::vector<BenchmarkKind> out;
  for (const auto& n : names) out.push_back(benchmark_kind_from_string(n));
  return out;
}

std::vector<std::string> benchmark_names(const std::vector<BenchmarkKind>& kinds) {
  std::vector<std::string> out;
  for (auto k : kinds) out.push_back(to_string(k));
  return out;
}

void read_experiment(const Json& j, ExperimentSettings& e, double t_scale) {
  Fields f(j, "experiment");
  f.get("name", e.name);
  f.get("n", e.n);
  f.get("masked_levels", e.masked_levels);
  std::vector<std::string> bench;
  f.get("benchmarks", bench);
  if (!bench.empty()) e.benchmarks = benchmark_list(bench);
  f.get("truth_draws", e.truth_draws);
  if (const Json* g = f.sub("groups")) e.groups = group_spec_from_json(*g);
  f.get("random_draws", e.random_draws);
  f.get("min_arm_count", e.min_arm_count);
  std::vector<std::string> classes;
  f.get("classes", classes);
  if (!classes.empty()) {
    e.classes.clear();
    for (const auto& c : classes) e.classes.push_back(policy_class_from_string(c));
  }
  f.get("n_bootstrap", e.n_bootstrap);
  f.get("grid_points", e.grid_points);
  f.get("include_oracle", e.include_oracle);
  f.get("n_grid", e.n_grid);
  f.get("reps", e.reps);
  f.get("seeds", e.seeds);
  f.get("Ks", e.Ks);
  if (const Json* s = f.sub("spans")) {
    if (!s->is_array()) throw InvalidInput("experiment.spans must be a list of designs");
    e.spans.clear();
    for (const auto& d : *s) e.spans.push_back(design_from_json(d).rescaled());
  }
  f.get("validation_n", e.validation_n);
  f.get("oracle_grid", e.oracle_grid);
  f.get("epsilons", e.epsilons);
  f.get("directions", e.directions);
  f.get("probe_ate", e.probe_ate);
  double raw_action = e.probe_action * t_scale;
  f.get("probe_action", raw_action);
  e.probe_action = raw_action / t_scale;
  f.get("conditional", e.conditional);
  f.finish();
}

Json experiment_json(const ExperimentSettings& e, double t_scale) {
  std::vector<std::string> classes;
  for (auto c : e.classes) classes.push_back(to_string(c));
  Json spans = Json::array();
  for (const auto& d : e.spans) {
    Design raw = d;
    for (auto& l : raw.levels) l *= t_scale;
    raw.t_max *= t_scale;
    spans.push_back(to_json(raw));
  }
  return Json{{"name", e.name},
              {"n", e.n},
              {"masked_levels", e.masked_levels},
              {"benchmarks", benchmark_names(e.benchmarks)},
              {"truth_draws", e.truth_draws},
              {"groups", to_json(e.groups)},
              {"random_draws", e.random_draws},
              {"min_arm_count", e.min_arm_count},
              {"classes", classes},
              {"n_bootstrap", e.n_bootstrap},
              {"grid_points", e.grid_points},
              {"include_oracle", e.include_oracle},
              {"n_grid", e.n_grid},
              {"reps", e.reps},
              {"seeds", e.seeds},
              {"Ks", e.Ks},
              {"spans", spans},
              {"validation_n", e.validation_n},
              {"oracle_grid", e.oracle_grid},
              {"epsilons", e.epsilons},
              {"directions", e.directions},
              {"probe_ate", e.probe_ate},
              {"probe_action", e.probe_action * t_scale},
              {"conditional", e.conditional}};
}

}  // namespace

const std::vector<std::string>& experiment_names() {
  static const std::vector<std::string> names{"ate-recovery", "discrete-regret", "continuous-regret", "scaling",
                                              "k-sweep",      "coverage-sweep",  "orthogonality-probe"};
  return names;
}

void apply_override(Json& root, const std::string& dotted_key, const std::string& value) {
  if (dotted_key.empty()) throw InvalidInput("override key is empty");
  Json* node = &root;
  std::size_t start = 0;
  while (true) {
    const auto dot = dotted_key.find('.', start);
    const std::string part = dotted_key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (part.empty()) throw InvalidInput("malformed override key '" + dotted_key + "'");
    if (!node->is_object()) *node = Json::object();
    node = &(*node)[part];
    if (dot == std::string::npos) break;
    start = dot + 1;
  }
  Json parsed = Json::parse(value, nullptr, false);
  *node = parsed.is_discarded() ? Json(value) : parsed;
}

RunConfig resolve(const Json& root) {
  RunConfig cfg;
  Fields f(root, "config");
  std::string mode = "synthetic";
  f.get("mode", mode);
  if (mode == "synthetic") {
    cfg.mode = Mode::Synthetic;
  } else if (mode == "data") {
    cfg.mode = Mode::Data;
  } else {
    throw InvalidInput("mode must be synthetic or data");
  }
  f.get("seed", cfg.seed);
  std::string path;
  if (f.sub("out")) {
    f.get("out", path);
    cfg.out = path;
  }
  if (f.sub("data")) {
    f.get("data", path);
    cfg.data = path;
  }
  if (f.sub("net")) {
    f.get("net", path);
    cfg.net = path;
  }
  if (const Json* d = f.sub("design")) cfg.raw_design = design_from_json(*d);
  if (const Json* t = f.sub("truth")) cfg.truth = *t;
  f.get("n", cfg.n);
  f.get("split_fraction", cfg.split_fraction);

  PipelineConfig& p = cfg.pipeline;
  f.get("K", p.K);
  if (const Json* vp = f.sub("vp")) p.vp = value_params_from_json(*vp);
  f.get("hidden", p.hidden);
  if (const Json* t = f.sub("train")) read_train(*t, p.train);
  f.get("standardize", p.standardize);
  f.get("ridge", p.ridge);
  f.get("confidence", p.confidence);
  f.get("cross_fit", p.cross_fit);
  if (const Json* pj = f.sub("policy")) {
    Fields pf(*pj, "policy");
    pf.get("class", cfg.policy_class);
    pf.get("grid_points", cfg.grid_points);
    pf.get("learning_rate", p.policy.learning_rate);
    pf.get("batch_size", p.policy.batch_size);
    pf.get("max_epochs", p.policy.max_epochs);
    pf.get("validation_fraction", p.policy.validation_fraction);
    pf.get("patience", p.policy.patience);
    pf.get("restarts", p.policy.restarts);
    pf.get("hidden", p.policy.hidden);
    pf.get("constant_grid", p.policy.constant_grid);
    pf.get("select_on_holdout", p.policy.select_on_holdout);
    pf.finish();
  }
  if (const Json* bj = f.sub("benchmark")) {
    Fields bf(*bj, "benchmark");
    bf.get("hidden", p.benchmark.hidden);
    bf.get("standardize", p.benchmark.standardize);
    bf.get("max_iterations", p.benchmark.max_iterations);
    bf.get("tolerance", p.benchmark.tolerance);
    if (const Json* t = bf.sub("train")) read_train(*t, p.benchmark.train);
    bf.finish();
  }
  if (const Json* e = f.sub("experiment")) read_experiment(*e, cfg.experiment, cfg.t_scale());
  f.finish();
  p.seed = cfg.seed;

  // Validation of the assembled config.
  p.validate();
  if (static_cast<std::size_t>(p.K) + 1 > cfg.raw_design.m()) {
    throw IdentifiabilityError("K = " + std::to_string(p.K) + " needs at least K+1 design levels, got " +
                               std::to_string(cfg.raw_design.m()));
  }
  if (!(cfg.split_fraction > 0.0 && cfg.split_fraction < 1.0)) throw InvalidInput("split_fraction must be in (0, 1)");
  if (cfg.n < 2) throw InvalidInput("n must be at least 2");
  if (cfg.grid_points < 2) throw InvalidInput("policy.grid_points must be at least 2");
  if (cfg.policy_class != "finite" && cfg.policy_class != "grid" && cfg.policy_class != "linear" &&
      cfg.policy_class != "neural") {
    throw InvalidInput("policy.class must be finite, grid, linear or neural");
  }
  const auto& names = experiment_names();
  if (!cfg.experiment.name.empty() &&
      std::find(names.begin(), names.end(), cfg.experiment.name) == names.end()) {
    throw InvalidInput("unknown experiment '" + cfg.experiment.name + "'");
  }
  if (cfg.mode == Mode::Synthetic) {
    const GroundTruth gt = ground_truth_from_json(cfg.truth);
    if (gt.t_max() != 1.0) throw InvalidInput("truth.t_max must be 1 (treatments are rescaled)");
  }
  return cfg;
}

Json to_json(const RunConfig& cfg) {
  const PipelineConfig& p = cfg.pipeline;
  const auto& pol = p.policy;
  Json j{{"mode", cfg.mode == Mode::Synthetic ? "synthetic" : "data"},
         {"seed", cfg.seed},
         {"out", cfg.out.string()}};
  if (cfg.data) j["data"] = cfg.data->string();
  if (cfg.net) j["net"] = cfg.net->string();
  j["design"] = to_json(cfg.raw_design);
  j["truth"] = cfg.truth;
  j["n"] = cfg.n;
  j["split_fraction"] = cfg.split_fraction;
  j["K"] = p.K;
  j["vp"] = to_json(p.vp);
  j["hidden"] = p.hidden;
  j["train"] = train_json(p.train);
  j["standardize"] = p.standardize;
  j["ridge"] = p.ridge;
  j["confidence"] = p.confidence;
  j["cross_fit"] = p.cross_fit;
  j["policy"] = Json{{"class", cfg.policy_class},
                     {"grid_points", cfg.grid_points},
                     {"learning_rate", pol.learning_rate},
                     {"batch_size", pol.batch_size},
                     {"max_epochs", pol.max_epochs},
                     {"validation_fraction", pol.validation_fraction},
                     {"patience", pol.patience},
                     {"restarts", pol.restarts},
                     {"hidden", pol.hidden},
                     {"constant_grid", pol.constant_grid},
                     {"select_on_holdout", pol.select_on_holdout}};
  j["benchmark"] = Json{{"hidden", p.benchmark.hidden},
                        {"standardize", p.benchmark.standardize},
                        {"max_iterations", p.benchmark.max_iterations},
                        {"tolerance", p.benchmark.tolerance},
                        {"train", train_json(p.benchmark.train)}};
  j["experiment"] = experiment_json(cfg.experiment, cfg.t_scale());
  return j;
}

}  // namespace dlpt::cli
