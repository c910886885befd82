#pragma once

// Nuisance networks. StructuredNet maps covariates to the K+1 coefficients of
// the latent polynomial in treatment; PlainNet maps (x, t) straight to an
// outcome probability.

#include "dlpt/core.hpp"
#include "dlpt/mlp.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace dlpt {

enum class LossKind { SquaredError, CrossEntropy };
enum class OptimizerKind { Sgd, Adam };

std::string to_string(LossKind kind);
LossKind loss_kind_from_string(const std::string& s);

/// Per-sample loss in the latent z = theta' T(t): squared error is 0.5 (G - y)^2.
double sample_loss(double z, double y, LossKind kind) noexcept;
/// d(sample_loss)/dz.
double sample_loss_dz(double z, double y, LossKind kind) noexcept;

struct TrainConfig {
  LossKind loss = LossKind::CrossEntropy;
  double learning_rate = 1e-3;
  int batch_size = 128;
  int epochs = 100;
  double validation_fraction = 0.1;
  int patience = 5;
  std::uint64_t seed = 0;
  OptimizerKind optimizer = OptimizerKind::Adam;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  void validate() const;
};

struct LossRecord {
  int epoch = 0;  // 0 is the initialization
  double train_loss = 0.0;
  double val_loss = 0.0;
};

struct TrainResult {
  std::vector<LossRecord> history;
  int best_epoch = 0;
  double initial_val_loss = 0.0;
  double best_val_loss = 0.0;
};

std::string history_csv(const std::vector<LossRecord>& history);

class StructuredNet {
 public:
  StructuredNet() = default;
  /// hidden: trunk widths; the heads form the final linear layer of width K+1.
  StructuredNet(std::size_t d, std::vector<int> hidden, int K, std::uint64_t seed);
  StructuredNet(Mlp body, int K, Standardizer scaling);

  int degree() const noexcept { return K_; }
  std::size_t input_dim() const noexcept { return static_cast<std::size_t>(body_.input_dim()); }
  const Mlp& body() const noexcept { return body_; }
  Mlp& body() noexcept { return body_; }
  const Standardizer& scaling() const noexcept { return scaling_; }
  void set_scaling(Standardizer s) { scaling_ = std::move(s); }

  /// (K+1) x n matrix of coefficients, one column per covariate column.
  Eigen::MatrixXd theta(const Eigen::MatrixXd& x) const;
  Eigen::VectorXd theta(const Eigen::VectorXd& x) const;
  double prob(const Eigen::VectorXd& x, double t) const;

 private:
  Mlp body_;
  int K_ = 0;
  Standardizer scaling_;
};

class PlainNet {
 public:
  PlainNet() = default;
  PlainNet(std::size_t d, std::vector<int> hidden, std::uint64_t seed);
  PlainNet(Mlp body, Standardizer scaling);

  std::size_t input_dim() const noexcept { return static_cast<std::size_t>(body_.input_dim() - 1); }
  const Mlp& body() const noexcept { return body_; }
  Mlp& body() noexcept { return body_; }
  const Standardizer& scaling() const noexcept { return scaling_; }
  void set_scaling(Standardizer s) { scaling_ = std::move(s); }

  /// Probabilities for covariate columns x at treatments t.
  Eigen::VectorXd prob(const Eigen::MatrixXd& x, const Eigen::VectorXd& t) const;
  double prob(const Eigen::VectorXd& x, double t) const;
  /// Probabilities and their derivatives in t.
  void prob_and_dt(const Eigen::MatrixXd& x, const Eigen::VectorXd& t, Eigen::VectorXd& p, Eigen::VectorXd& dp) const;

 private:
  Eigen::MatrixXd inputs(const Eigen::MatrixXd& x, const Eigen::VectorXd& t) const;

  Mlp body_;
  Standardizer scaling_;
};

/// Mean loss over the dataset (or the given rows).
double empirical_loss(const StructuredNet& net, const Dataset& ds, LossKind kind);
double empirical_loss(const PlainNet& net, const Dataset& ds, LossKind kind);
/// Gradient of empirical_loss with respect to the flat parameter vector.
Eigen::VectorXd loss_gradient(const StructuredNet& net, const Dataset& ds, LossKind kind);
Eigen::VectorXd loss_gradient(const PlainNet& net, const Dataset& ds, LossKind kind);

/// Mini-batch training with early stopping; the best validation checkpoint is
/// restored. Throws IdentifiabilityError when the design has fewer than K+1 levels.
TrainResult train(StructuredNet& net, const Dataset& ds, const TrainConfig& cfg);
TrainResult plain_train(PlainNet& net, const Dataset& ds, const TrainConfig& cfg);

/// max over parameters of |analytic - central difference| / (|central difference| + 1e-8).
double backprop_check(const StructuredNet& net, const Dataset& ds, const TrainConfig& cfg, double h = 1e-4);
double backprop_check(const PlainNet& net, const Dataset& ds, const TrainConfig& cfg, double h = 1e-4);

}  // namespace dlpt
