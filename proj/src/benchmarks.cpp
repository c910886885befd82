#include "dlpt/benchmarks.hpp"

#include "dlpt/error.hpp"
#include "dlpt/mlp.hpp"

#include <algorithm>
#include <cmath>

namespace dlpt {

std::string to_string(BenchmarkKind kind) {
  switch (kind) {
    case BenchmarkKind::LinearReg: return "LR";
    case BenchmarkKind::LogisticReg: return "LogR";
    case BenchmarkKind::LogitChoice: return "LCM";
    case BenchmarkKind::PlainNetwork: return "PDL";
    case BenchmarkKind::Uniform: return "UNI";
  }
  return "?";
}

BenchmarkKind benchmark_kind_from_string(const std::string& s) {
  for (auto k : {BenchmarkKind::LinearReg, BenchmarkKind::LogisticReg, BenchmarkKind::LogitChoice,
                 BenchmarkKind::PlainNetwork, BenchmarkKind::Uniform}) {
    if (to_string(k) == s) return k;
  }
  throw InvalidInput("unknown benchmark '" + s + "' (expected LR, LogR, LCM, PDL or UNI)");
}

std::vector<double> UniformModel::level_values(const ValueParams& vp) const {
  std::vector<double> v(levels.size());
  for (std::size_t j = 0; j < levels.size(); ++j) v[j] = vp.w * means[j] - vp.c * levels[j];
  return v;
}

double UniformModel::best_level(const ValueParams& vp) const {
  const auto v = level_values(vp);
  std::size_t best = 0;
  for (std::size_t j = 1; j < v.size(); ++j) {
    if (v[j] > v[best]) best = j;
  }
  return levels[best];
}

namespace {

// Rows (1, x', t).
Eigen::MatrixXd linear_features(const Eigen::MatrixXd& x, std::span<const double> t) {
  const auto n = x.cols(), d = x.rows();
  Eigen::MatrixXd f(n, d + 2);
  f.col(0).setOnes();
  f.middleCols(1, d) = x.transpose();
  for (Eigen::Index i = 0; i < n; ++i) f(i, d + 1) = t[static_cast<std::size_t>(i)];
  return f;
}

// Rows (1, x', t, t x').
Eigen::MatrixXd choice_features(const Eigen::MatrixXd& x, std::span<const double> t) {
  const auto n = x.cols(), d = x.rows();
  Eigen::MatrixXd f(n, 2 * (d + 1));
  f.col(0).setOnes();
  f.middleCols(1, d) = x.transpose();
  for (Eigen::Index i = 0; i < n; ++i) {
    const double ti = t[static_cast<std::size_t>(i)];
    f(i, d + 1) = ti;
    f.row(i).segment(d + 2, d) = ti * x.col(i).transpose();
  }
  return f;
}

std::span<const double> as_span(const Eigen::VectorXd& v) {
  return {v.data(), static_cast<std::size_t>(v.size())};
}

double mean_logistic_loss(const Eigen::MatrixXd& f, const Eigen::VectorXd& y, const Eigen::VectorXd& b) {
  const Eigen::VectorXd z = f * b;
  double s = 0.0;
  for (Eigen::Index i = 0; i < z.size(); ++i) s += softplus(z[i]) - y[i] * z[i];
  return s / static_cast<double>(z.size());
}

}  // namespace

Eigen::VectorXd fit_logistic(const Eigen::MatrixXd& features, const Eigen::VectorXd& y, int max_iterations,
                             double tolerance, FitDiagnostics& diag) {
  const auto n = features.rows(), p = features.cols();
  if (n == 0) throw InvalidInput("training set is empty");
  if (y.size() != n) throw InvalidInput("one outcome per feature row expected");
  Eigen::VectorXd b = Eigen::VectorXd::Zero(p);
  double loss = mean_logistic_loss(features, y, b);
  diag = FitDiagnostics{0, 0.0, false};
  for (int it = 0; it <= max_iterations; ++it) {
    const Eigen::VectorXd z = features * b;
    Eigen::VectorXd r(n), wts(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double g = sigmoid(z[i]);
      r[i] = g - y[i];
      wts[i] = g * (1.0 - g);
    }
    const Eigen::VectorXd grad = features.transpose() * r / static_cast<double>(n);
    diag.iterations = it;
    diag.gradient_norm = grad.norm();
    if (!std::isfinite(diag.gradient_norm)) throw NumericalError("logistic fit produced a non-finite gradient");
    if (diag.gradient_norm < tolerance) {
      diag.converged = true;
      break;
    }
    if (it == max_iterations) break;
    Eigen::MatrixXd h = features.transpose() * wts.asDiagonal() * features / static_cast<double>(n);
    h.diagonal().array() += 1e-10;
    const Eigen::VectorXd step = h.ldlt().solve(-grad);
    const double slope = grad.dot(step);
    double scale = 1.0;
    double next = mean_logistic_loss(features, y, b + step);
    while (!(next <= loss + 1e-4 * scale * slope) && scale > 1e-12) {
      scale *= 0.5;
      next = mean_logistic_loss(features, y, b + scale * step);
    }
    if (!(next <= loss)) break;  // no further descent possible at double precision
    b += scale * step;
    loss = next;
  }
  return b;
}

ResponseModel fit(BenchmarkKind kind, const Dataset& train, const BenchmarkConfig& cfg) {
  if (train.empty()) throw InvalidInput("training set is empty");
  const auto t = as_span(train.t());
  switch (kind) {
    case BenchmarkKind::LinearReg: {
      const Eigen::MatrixXd f = linear_features(train.x(), t);
      Eigen::MatrixXd gram = f.transpose() * f / static_cast<double>(f.rows());
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(gram);
      if (es.eigenvalues().minCoeff() <= 1e-12 * std::max(1.0, es.eigenvalues().maxCoeff())) {
        throw SingularityError("linear regression design is rank deficient");
      }
      gram.diagonal().array() += 1e-8;
      const Eigen::VectorXd rhs = f.transpose() * train.y() / static_cast<double>(f.rows());
      return ResponseModel{LinearRegModel{gram.ldlt().solve(rhs)}};
    }
    case BenchmarkKind::LogisticReg: {
      LogisticRegModel m;
      m.coef = fit_logistic(linear_features(train.x(), t), train.y(), cfg.max_iterations, cfg.tolerance,
                            m.diagnostics);
      return ResponseModel{m};
    }
    case BenchmarkKind::LogitChoice: {
      LogitChoiceModel m;
      const Eigen::VectorXd b = fit_logistic(choice_features(train.x(), t), train.y(), cfg.max_iterations,
                                             cfg.tolerance, m.diagnostics);
      const auto d = train.x().rows();
      m.alpha = b.head(d + 1);
      m.beta = b.tail(d + 1);
      return ResponseModel{m};
    }
    case BenchmarkKind::PlainNetwork: {
      auto net = std::make_shared<PlainNet>(train.dim(), cfg.hidden, child_seed(cfg.seed, "pdl-init"));
      if (cfg.standardize) net->set_scaling(Standardizer::fit(train.x()));
      TrainConfig tc = cfg.train;
      tc.seed = child_seed(cfg.seed, "pdl-train");
      plain_train(*net, train, tc);
      return ResponseModel{PlainNetModel{std::move(net)}};
    }
    case BenchmarkKind::Uniform: {
      UniformModel m;
      const Design& design = train.design();
      m.levels = design.levels;
      m.means.assign(design.m(), 0.0);
      m.counts.assign(design.m(), 0);
      for (std::size_t i = 0; i < train.size(); ++i) {
        m.means[train.arm(i)] += train.y()[static_cast<Eigen::Index>(i)];
        ++m.counts[train.arm(i)];
      }
      for (std::size_t j = 0; j < design.m(); ++j) {
        if (m.counts[j] == 0) throw InvalidInput("level " + std::to_string(design.levels[j]) + " has no samples");
        m.means[j] /= static_cast<double>(m.counts[j]);
      }
      return ResponseModel{m};
    }
  }
  throw InvalidInput("unknown benchmark kind");
}

namespace {

void predict_impl(const ResponseModel& model, const Eigen::MatrixXd& x, std::span<const double> t,
                  Eigen::VectorXd& p, Eigen::VectorXd* dp) {
  const auto n = x.cols();
  if (static_cast<std::size_t>(n) != t.size()) throw InvalidInput("one treatment per covariate column is required");
  p.resize(n);
  if (dp) dp->resize(n);
  if (const auto* lr = std::get_if<LinearRegModel>(&model.m)) {
    p = linear_features(x, t) * lr->coef;
    if (dp) dp->setConstant(lr->coef[lr->coef.size() - 1]);
  } else if (const auto* lg = std::get_if<LogisticRegModel>(&model.m)) {
    const Eigen::VectorXd z = linear_features(x, t) * lg->coef;
    const double bt = lg->coef[lg->coef.size() - 1];
    for (Eigen::Index i = 0; i < n; ++i) {
      p[i] = sigmoid(z[i]);
      if (dp) (*dp)[i] = p[i] * (1.0 - p[i]) * bt;
    }
  } else if (const auto* lc = std::get_if<LogitChoiceModel>(&model.m)) {
    const auto d = x.rows();
    for (Eigen::Index i = 0; i < n; ++i) {
      const double slope = lc->beta[0] + lc->beta.tail(d).dot(x.col(i));
      const double z = lc->alpha[0] + lc->alpha.tail(d).dot(x.col(i)) + slope * t[static_cast<std::size_t>(i)];
      p[i] = sigmoid(z);
      if (dp) (*dp)[i] = p[i] * (1.0 - p[i]) * slope;
    }
  } else if (const auto* pn = std::get_if<PlainNetModel>(&model.m)) {
    const Eigen::VectorXd tv = Eigen::Map<const Eigen::VectorXd>(t.data(), n);
    if (dp) {
      pn->net->prob_and_dt(x, tv, p, *dp);
    } else {
      p = pn->net->prob(x, tv);
    }
  } else {
    const auto& u = std::get<UniformModel>(model.m);
    if (dp) throw InvalidInput("the uniform benchmark has no treatment derivative");
    for (Eigen::Index i = 0; i < n; ++i) {
      const double ti = t[static_cast<std::size_t>(i)];
      std::size_t j = 0;
      while (j < u.levels.size() && std::abs(u.levels[j] - ti) > kLevelTolerance) ++j;
      if (j == u.levels.size()) throw InvalidInput("the uniform benchmark is only defined at design levels");
      p[i] = u.means[j];
    }
  }
}

}  // namespace

Eigen::VectorXd predict(const ResponseModel& model, const Eigen::MatrixXd& x, std::span<const double> t) {
  Eigen::VectorXd p;
  predict_impl(model, x, t, p, nullptr);
  return p;
}

double predict(const ResponseModel& model, const Eigen::VectorXd& x, double t) {
  const Eigen::MatrixXd xm = x;
  return predict(model, xm, std::span<const double>(&t, 1))[0];
}

Eigen::VectorXd dpredict_dt(const ResponseModel& model, const Eigen::MatrixXd& x, std::span<const double> t) {
  Eigen::VectorXd p, dp;
  predict_impl(model, x, t, p, &dp);
  return dp;
}

double plugin_ate(const ResponseModel& model, const Eigen::MatrixXd& x, double level) {
  if (x.cols() == 0) throw InvalidInput("no covariates to average over");
  if (level == 0.0) return 0.0;
  const std::vector<double> treated(static_cast<std::size_t>(x.cols()), level);
  const std::vector<double> control(static_cast<std::size_t>(x.cols()), 0.0);
  return (predict(model, x, treated) - predict(model, x, control)).mean();
}

std::vector<double> plugin_actions(const ResponseModel& model, const Eigen::MatrixXd& x,
                                   std::span<const double> candidates, const ValueParams& vp, double t_max) {
  const auto cand = candidate_levels(candidates, t_max);
  const auto n = static_cast<std::size_t>(x.cols());
  if (const auto* u = std::get_if<UniformModel>(&model.m)) {
    // UNI is non-personalized: its best level among the candidates it can value.
    const auto values = u->level_values(vp);
    double best = cand.front(), best_value = -std::numeric_limits<double>::infinity();
    bool found = false;
    for (double a : cand) {
      for (std::size_t j = 0; j < u->levels.size(); ++j) {
        if (std::abs(u->levels[j] - a) <= kLevelTolerance && values[j] > best_value) {
          best_value = values[j];
          best = a;
          found = true;
        }
      }
    }
    if (!found) throw InvalidInput("no candidate is a design level of the uniform benchmark");
    return std::vector<double>(n, best);
  }
  const ModelSurface surface(model, x, vp, t_max);
  return learn_finite_actions(surface, cand);
}

Policy plugin_policy(const ResponseModel& model, const Eigen::MatrixXd& x, std::span<const double> candidates,
                     const ValueParams& vp, double t_max) {
  const auto actions = plugin_actions(model, x, candidates, vp, t_max);
  if (std::holds_alternative<UniformModel>(model.m)) {
    return Policy{ConstantPolicy{actions.empty() ? 0.0 : actions.front()}, t_max};
  }
  return table_policy(x, actions, t_max);
}

void ModelSurface::evaluate(std::span<const std::size_t> idx, std::span<const double> a, std::span<double> value,
                            std::span<double> deriv) const {
  Eigen::MatrixXd xb(x_.rows(), static_cast<Eigen::Index>(idx.size()));
  for (std::size_t k = 0; k < idx.size(); ++k) xb.col(static_cast<Eigen::Index>(k)) = x_.col(idx[k]);
  Eigen::VectorXd p, dp;
  predict_impl(model_, xb, a, p, deriv.empty() ? nullptr : &dp);
  for (std::size_t k = 0; k < idx.size(); ++k) {
    value[k] = vp_.w * p[static_cast<Eigen::Index>(k)] - vp_.c * a[k];
    if (!deriv.empty()) deriv[k] = vp_.w * dp[static_cast<Eigen::Index>(k)] - vp_.c;
  }
}

}  // namespace dlpt
