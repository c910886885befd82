#include "dlpt/policy.hpp"

#include "dlpt/error.hpp"

#include <algorithm>

namespace dlpt {

namespace {

std::vector<double> to_key(const Eigen::VectorXd& x) { return std::vector<double>(x.data(), x.data() + x.size()); }

double table_lookup(const TablePolicy& table, const Eigen::VectorXd& x) {
  if (!table.groups.empty()) {
    const auto it = table.by_group.find(group_key(x, table.groups));
    if (it == table.by_group.end()) throw InvalidInput("covariates fall in a group the table policy was not learned on");
    return it->second;
  }
  const auto it = table.by_covariates.find(to_key(x));
  if (it == table.by_covariates.end()) throw InvalidInput("table policy is only defined on the samples it was learned on");
  return it->second;
}

}  // namespace

double apply(const Policy& policy, const Eigen::VectorXd& x) {
  const Eigen::MatrixXd xm = x;
  return apply_all(policy, xm).front();
}

std::vector<double> apply_all(const Policy& policy, const Eigen::MatrixXd& x) {
  const auto n = static_cast<std::size_t>(x.cols());
  std::vector<double> out(n);
  const double t_max = policy.t_max;
  auto clip = [t_max](double a) { return std::clamp(a, 0.0, t_max); };

  if (const auto* c = std::get_if<ConstantPolicy>(&policy.rule)) {
    std::fill(out.begin(), out.end(), clip(c->action));
  } else if (const auto* table = std::get_if<TablePolicy>(&policy.rule)) {
    for (std::size_t i = 0; i < n; ++i) out[i] = clip(table_lookup(*table, x.col(static_cast<Eigen::Index>(i))));
  } else if (const auto* lin = std::get_if<LinearPolicy>(&policy.rule)) {
    if (lin->alpha.size() != x.rows()) throw InvalidInput("linear policy dimension mismatch");
    const Eigen::VectorXd raw = (lin->alpha.transpose() * x).transpose();
    for (std::size_t i = 0; i < n; ++i) out[i] = clip(raw[static_cast<Eigen::Index>(i)] + lin->beta);
  } else {
    const auto& nn = std::get<NeuralPolicy>(policy.rule);
    const Eigen::MatrixXd raw = nn.body.forward(x);
    for (std::size_t i = 0; i < n; ++i) out[i] = t_max * sigmoid(raw(0, static_cast<Eigen::Index>(i)));
  }
  return out;
}

std::string policy_class_name(const Policy& policy) {
  switch (policy.rule.index()) {
    case 0: return "constant";
    case 1: return "table";
    case 2: return "linear";
    default: return "neural";
  }
}

}  // namespace dlpt
