#pragma once

// Treatment rules x -> a in [0, t_max].

#include "dlpt/core.hpp"
#include "dlpt/mlp.hpp"

#include <map>
#include <variant>
#include <vector>

namespace dlpt {

struct ConstantPolicy {
  double action = 0.0;
};

/// Per-sample or per-group table of chosen levels. With an empty group spec the
/// table is keyed by the exact covariate vector of each learned-on sample.
struct TablePolicy {
  GroupSpec groups;
  std::map<GroupKey, double> by_group;
  std::map<std::vector<double>, double> by_covariates;
};

/// a = clip(alpha' x + beta, 0, t_max).
struct LinearPolicy {
  Eigen::VectorXd alpha;
  double beta = 0.0;
};

/// a = t_max * sigmoid(body(x)).
struct NeuralPolicy {
  Mlp body;
};

struct Policy {
  std::variant<ConstantPolicy, TablePolicy, LinearPolicy, NeuralPolicy> rule;
  double t_max = 1.0;
};

/// Throws InvalidInput for covariates outside a table policy's support.
double apply(const Policy& policy, const Eigen::VectorXd& x);
std::vector<double> apply_all(const Policy& policy, const Eigen::MatrixXd& x);

std::string policy_class_name(const Policy& policy);

}  // namespace dlpt
