#include "dlpt/nets.hpp"

#include "dlpt/error.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <span>

namespace dlpt {

std::string to_string(LossKind kind) { return kind == LossKind::CrossEntropy ? "bce" : "mse"; }

LossKind loss_kind_from_string(const std::string& s) {
  if (s == "bce" || s == "cross_entropy" || s == "binary_cross_entropy") return LossKind::CrossEntropy;
  if (s == "mse" || s == "squared_error") return LossKind::SquaredError;
  throw InvalidInput("unknown loss kind '" + s + "'");
}

double sample_loss(double z, double y, LossKind kind) noexcept {
  if (kind == LossKind::CrossEntropy) return softplus(z) - y * z;
  const double r = sigmoid(z) - y;
  return 0.5 * r * r;
}

double sample_loss_dz(double z, double y, LossKind kind) noexcept {
  const double g = sigmoid(z);
  if (kind == LossKind::CrossEntropy) return g - y;
  return (g - y) * g * (1.0 - g);
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw InvalidInput("learning rate must be positive");
  if (batch_size <= 0) throw InvalidInput("batch size must be positive");
  if (epochs < 0) throw InvalidInput("epochs must be nonnegative");
  if (!(validation_fraction >= 0.0 && validation_fraction < 1.0))
    throw InvalidInput("validation fraction must be in [0, 1)");
  if (patience < 1) throw InvalidInput("patience must be at least 1");
}

std::string history_csv(const std::vector<LossRecord>& history) {
  std::string out = "epoch,train_loss,val_loss\n";
  char buf[128];
  for (const auto& r : history) {
    std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g\n", r.epoch, r.train_loss, r.val_loss);
    out += buf;
  }
  return out;
}

namespace {

std::vector<int> chain_dims(std::size_t in, const std::vector<int>& hidden, int out) {
  std::vector<int> dims{static_cast<int>(in)};
  dims.insert(dims.end(), hidden.begin(), hidden.end());
  dims.push_back(out);
  return dims;
}

Eigen::MatrixXd gather_columns(const Eigen::MatrixXd& m, std::span<const std::size_t> idx) {
  Eigen::MatrixXd out(m.rows(), static_cast<Eigen::Index>(idx.size()));
  for (std::size_t k = 0; k < idx.size(); ++k) out.col(static_cast<Eigen::Index>(k)) = m.col(static_cast<Eigen::Index>(idx[k]));
  return out;
}

// Adapters exposing a common latent-index interface to the trainer:
// forward() returns z (one entry per sample) and grad_output() turns dL/dz
// into dL/d(network output).
struct StructuredAdapter {
  static Eigen::MatrixXd inputs(const StructuredNet& net, const Dataset& ds, std::span<const std::size_t> idx) {
    return net.scaling().apply(gather_columns(ds.x(), idx));
  }
  static Eigen::MatrixXd basis(const StructuredNet& net, const Dataset& ds, std::span<const std::size_t> idx) {
    Eigen::MatrixXd T(net.degree() + 1, static_cast<Eigen::Index>(idx.size()));
    for (std::size_t k = 0; k < idx.size(); ++k)
      T.col(static_cast<Eigen::Index>(k)) = poly_features(ds.t()[static_cast<Eigen::Index>(idx[k])], net.degree());
    return T;
  }
  static Eigen::VectorXd latent(const StructuredNet& net, const Dataset& ds, std::span<const std::size_t> idx,
                                const Eigen::MatrixXd& out) {
    return out.cwiseProduct(basis(net, ds, idx)).colwise().sum().transpose();
  }
  static Eigen::MatrixXd grad_output(const StructuredNet& net, const Dataset& ds, std::span<const std::size_t> idx,
                                     const Eigen::VectorXd& dz) {
    Eigen::MatrixXd T = basis(net, ds, idx);
    return (T.array().rowwise() * dz.transpose().array()).matrix();
  }
};

struct PlainAdapter {
  static Eigen::MatrixXd inputs(const PlainNet& net, const Dataset& ds, std::span<const std::size_t> idx) {
    Eigen::MatrixXd in(static_cast<Eigen::Index>(ds.dim() + 1), static_cast<Eigen::Index>(idx.size()));
    in.topRows(static_cast<Eigen::Index>(ds.dim())) = net.scaling().apply(gather_columns(ds.x(), idx));
    for (std::size_t k = 0; k < idx.size(); ++k)
      in(static_cast<Eigen::Index>(ds.dim()), static_cast<Eigen::Index>(k)) = ds.t()[static_cast<Eigen::Index>(idx[k])];
    return in;
  }
  static Eigen::VectorXd latent(const PlainNet&, const Dataset&, std::span<const std::size_t>,
                                const Eigen::MatrixXd& out) {
    return out.row(0).transpose();
  }
  static Eigen::MatrixXd grad_output(const PlainNet&, const Dataset&, std::span<const std::size_t>,
                                     const Eigen::VectorXd& dz) {
    return dz.transpose();
  }
};

template <class Adapter, class Net>
double batch_loss(const Net& net, const Dataset& ds, std::span<const std::size_t> idx, LossKind kind) {
  const Eigen::MatrixXd out = net.body().forward(Adapter::inputs(net, ds, idx));
  const Eigen::VectorXd z = Adapter::latent(net, ds, idx, out);
  double total = 0.0;
  for (std::size_t k = 0; k < idx.size(); ++k)
    total += sample_loss(z[static_cast<Eigen::Index>(k)], ds.y()[static_cast<Eigen::Index>(idx[k])], kind);
  return total;
}

template <class Adapter, class Net>
double mean_loss(const Net& net, const Dataset& ds, std::span<const std::size_t> idx, LossKind kind) {
  if (idx.empty()) return 0.0;
  constexpr std::size_t chunk = 4096;
  double total = 0.0;
  for (std::size_t s = 0; s < idx.size(); s += chunk)
    total += batch_loss<Adapter>(net, ds, idx.subspan(s, std::min(chunk, idx.size() - s)), kind);
  return total / static_cast<double>(idx.size());
}

// Sum of per-sample losses over idx and the accumulated (unscaled) gradient.
template <class Adapter, class Net>
double batch_loss_grad(const Net& net, const Dataset& ds, std::span<const std::size_t> idx, LossKind kind,
                       Eigen::VectorXd& grad) {
  Mlp::Tape tape;
  const Eigen::MatrixXd out = net.body().forward(Adapter::inputs(net, ds, idx), tape);
  const Eigen::VectorXd z = Adapter::latent(net, ds, idx, out);
  Eigen::VectorXd dz(z.size());
  double total = 0.0;
  for (std::size_t k = 0; k < idx.size(); ++k) {
    const auto kk = static_cast<Eigen::Index>(k);
    const double y = ds.y()[static_cast<Eigen::Index>(idx[k])];
    total += sample_loss(z[kk], y, kind);
    dz[kk] = sample_loss_dz(z[kk], y, kind);
  }
  net.body().backward(tape, Adapter::grad_output(net, ds, idx, dz), grad);
  return total;
}

std::vector<std::size_t> all_indices(std::size_t n) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  return idx;
}

template <class Adapter, class Net>
Eigen::VectorXd full_gradient(const Net& net, const Dataset& ds, LossKind kind) {
  const auto idx = all_indices(ds.size());
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(net.body().parameter_count()));
  if (idx.empty()) return grad;
  batch_loss_grad<Adapter>(net, ds, idx, kind, grad);
  return grad / static_cast<double>(idx.size());
}

template <class Adapter, class Net>
TrainResult train_impl(Net& net, const Dataset& ds, const TrainConfig& cfg) {
  cfg.validate();
  if (ds.empty()) throw InvalidInput("cannot train on an empty dataset");

  std::vector<std::size_t> train_idx, val_idx;
  if (cfg.validation_fraction > 0.0 && ds.size() >= 2) {
    const double fr[2] = {1.0 - cfg.validation_fraction, cfg.validation_fraction};
    auto parts = split_indices(ds.size(), fr, child_seed(cfg.seed, "validation"));
    train_idx = std::move(parts[0]);
    val_idx = std::move(parts[1]);
  }
  if (train_idx.empty() || val_idx.empty()) {
    train_idx = all_indices(ds.size());
    val_idx = train_idx;
  }

  TrainResult result;
  const double init_train = mean_loss<Adapter>(net, ds, train_idx, cfg.loss);
  const double init_val = mean_loss<Adapter>(net, ds, val_idx, cfg.loss);
  if (!std::isfinite(init_train) || !std::isfinite(init_val)) throw DivergenceError("non-finite loss", 0);
  result.history.push_back({0, init_train, init_val});
  result.initial_val_loss = init_val;
  result.best_val_loss = init_val;

  Eigen::VectorXd best_params = net.body().params();
  Adam adam(net.body().parameter_count(), cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.epsilon);
  Eigen::VectorXd grad(static_cast<Eigen::Index>(net.body().parameter_count()));
  Rng shuffle(child_seed(cfg.seed, "shuffle"));
  const auto batch = static_cast<std::size_t>(cfg.batch_size);
  int stale = 0;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    for (std::size_t i = train_idx.size() - 1; i > 0; --i) std::swap(train_idx[i], train_idx[shuffle.below(i + 1)]);
    double epoch_total = 0.0;
    for (std::size_t s = 0; s < train_idx.size(); s += batch) {
      const auto idx = std::span<const std::size_t>(train_idx).subspan(s, std::min(batch, train_idx.size() - s));
      grad.setZero();
      epoch_total += batch_loss_grad<Adapter>(net, ds, idx, cfg.loss, grad);
      grad /= static_cast<double>(idx.size());
      if (cfg.optimizer == OptimizerKind::Adam) {
        adam.step(net.body().params(), grad);
      } else {
        net.body().params() -= cfg.learning_rate * grad;
      }
    }
    const double train_loss = epoch_total / static_cast<double>(train_idx.size());
    const double val_loss = mean_loss<Adapter>(net, ds, val_idx, cfg.loss);
    if (!std::isfinite(train_loss) || !std::isfinite(val_loss) || !net.body().params().allFinite())
      throw DivergenceError("non-finite loss during training", epoch);
    result.history.push_back({epoch, train_loss, val_loss});
    if (val_loss < result.best_val_loss) {
      result.best_val_loss = val_loss;
      result.best_epoch = epoch;
      best_params = net.body().params();
      stale = 0;
    } else if (++stale >= cfg.patience) {
      break;
    }
  }
  net.body().params() = best_params;
  return result;
}

template <class Adapter, class Net>
double backprop_check_impl(const Net& net, const Dataset& ds, LossKind kind, double h) {
  const Eigen::VectorXd analytic = full_gradient<Adapter>(net, ds, kind);
  const auto idx = all_indices(ds.size());
  Net probe = net;
  double worst = 0.0;
  for (Eigen::Index p = 0; p < analytic.size(); ++p) {
    const double saved = probe.body().params()[p];
    probe.body().params()[p] = saved + h;
    const double up = mean_loss<Adapter>(probe, ds, idx, kind);
    probe.body().params()[p] = saved - h;
    const double down = mean_loss<Adapter>(probe, ds, idx, kind);
    probe.body().params()[p] = saved;
    const double fd = (up - down) / (2.0 * h);
    worst = std::max(worst, std::abs(analytic[p] - fd) / (std::abs(fd) + 1e-8));
  }
  return worst;
}

}  // namespace

StructuredNet::StructuredNet(std::size_t d, std::vector<int> hidden, int K, std::uint64_t seed) : K_(K) {
  if (K < 0) throw InvalidInput("polynomial degree must be nonnegative");
  Rng rng(child_seed(seed, "structured-init"));
  body_ = Mlp(chain_dims(d, hidden, K + 1), rng);
  scaling_ = Standardizer::identity(d);
}

StructuredNet::StructuredNet(Mlp body, int K, Standardizer scaling)
    : body_(std::move(body)), K_(K), scaling_(std::move(scaling)) {
  if (body_.output_dim() != K + 1) throw InvalidInput("structured net needs K+1 heads");
}

Eigen::MatrixXd StructuredNet::theta(const Eigen::MatrixXd& x) const {
  if (static_cast<std::size_t>(x.rows()) != input_dim()) throw InvalidInput("covariate dimension mismatch");
  return body_.forward(scaling_.apply(x));
}

Eigen::VectorXd StructuredNet::theta(const Eigen::VectorXd& x) const {
  return theta(Eigen::MatrixXd(x)).col(0);
}

double StructuredNet::prob(const Eigen::VectorXd& x, double t) const {
  return sigmoid(theta(x).dot(poly_features(t, K_)));
}

PlainNet::PlainNet(std::size_t d, std::vector<int> hidden, std::uint64_t seed) {
  Rng rng(child_seed(seed, "plain-init"));
  body_ = Mlp(chain_dims(d + 1, hidden, 1), rng);
  scaling_ = Standardizer::identity(d);
}

PlainNet::PlainNet(Mlp body, Standardizer scaling) : body_(std::move(body)), scaling_(std::move(scaling)) {
  if (body_.output_dim() != 1) throw InvalidInput("plain net has a single output");
}

Eigen::MatrixXd PlainNet::inputs(const Eigen::MatrixXd& x, const Eigen::VectorXd& t) const {
  if (static_cast<std::size_t>(x.rows()) != input_dim()) throw InvalidInput("covariate dimension mismatch");
  Eigen::MatrixXd in(x.rows() + 1, x.cols());
  in.topRows(x.rows()) = scaling_.apply(x);
  in.row(x.rows()) = t.transpose();
  return in;
}

Eigen::VectorXd PlainNet::prob(const Eigen::MatrixXd& x, const Eigen::VectorXd& t) const {
  const Eigen::MatrixXd z = body_.forward(inputs(x, t));
  Eigen::VectorXd p(z.cols());
  for (Eigen::Index i = 0; i < z.cols(); ++i) p[i] = sigmoid(z(0, i));
  return p;
}

double PlainNet::prob(const Eigen::VectorXd& x, double t) const {
  return prob(Eigen::MatrixXd(x), Eigen::VectorXd::Constant(1, t))[0];
}

void PlainNet::prob_and_dt(const Eigen::MatrixXd& x, const Eigen::VectorXd& t, Eigen::VectorXd& p,
                           Eigen::VectorXd& dp) const {
  Mlp::Tape tape;
  const Eigen::MatrixXd z = body_.forward(inputs(x, t), tape);
  Eigen::VectorXd scratch;
  Eigen::MatrixXd grad_in;
  body_.backward(tape, Eigen::MatrixXd::Ones(1, z.cols()), scratch, &grad_in);
  p.resize(z.cols());
  dp.resize(z.cols());
  for (Eigen::Index i = 0; i < z.cols(); ++i) {
    p[i] = sigmoid(z(0, i));
    dp[i] = p[i] * (1.0 - p[i]) * grad_in(x.rows(), i);
  }
}

double empirical_loss(const StructuredNet& net, const Dataset& ds, LossKind kind) {
  return mean_loss<StructuredAdapter>(net, ds, all_indices(ds.size()), kind);
}
double empirical_loss(const PlainNet& net, const Dataset& ds, LossKind kind) {
  return mean_loss<PlainAdapter>(net, ds, all_indices(ds.size()), kind);
}
Eigen::VectorXd loss_gradient(const StructuredNet& net, const Dataset& ds, LossKind kind) {
  return full_gradient<StructuredAdapter>(net, ds, kind);
}
Eigen::VectorXd loss_gradient(const PlainNet& net, const Dataset& ds, LossKind kind) {
  return full_gradient<PlainAdapter>(net, ds, kind);
}

TrainResult train(StructuredNet& net, const Dataset& ds, const TrainConfig& cfg) {
  const auto needed = static_cast<std::size_t>(net.degree()) + 1;
  if (ds.design().m() < needed)
    throw IdentifiabilityError("structured net with K=" + std::to_string(net.degree()) + " needs at least " +
                               std::to_string(needed) + " design levels, got " + std::to_string(ds.design().m()));
  if (ds.dim() != net.input_dim()) throw InvalidInput("covariate dimension mismatch");
  return train_impl<StructuredAdapter>(net, ds, cfg);
}

TrainResult plain_train(PlainNet& net, const Dataset& ds, const TrainConfig& cfg) {
  if (ds.dim() != net.input_dim()) throw InvalidInput("covariate dimension mismatch");
  return train_impl<PlainAdapter>(net, ds, cfg);
}

double backprop_check(const StructuredNet& net, const Dataset& ds, const TrainConfig& cfg, double h) {
  return backprop_check_impl<StructuredAdapter>(net, ds, cfg.loss, h);
}
double backprop_check(const PlainNet& net, const Dataset& ds, const TrainConfig& cfg, double h) {
  return backprop_check_impl<PlainAdapter>(net, ds, cfg.loss, h);
}

}  // namespace dlpt
