#pragma once

#include "dlpt/rng.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <vector>

namespace dlpt {

/// Fully connected network, rectifier on hidden layers and a linear output
/// layer. All parameters live in one flat vector so that optimizers and
/// finite-difference checks can treat them uniformly. Batches are column-major:
/// one sample per column.
class Mlp {
 public:
  using ConstMatrixMap = Eigen::Map<const Eigen::MatrixXd>;
  using MatrixMap = Eigen::Map<Eigen::MatrixXd>;
  using ConstVectorMap = Eigen::Map<const Eigen::VectorXd>;
  using VectorMap = Eigen::Map<Eigen::VectorXd>;

  /// Activations recorded by forward() for a later backward().
  struct Tape {
    std::vector<Eigen::MatrixXd> activations;  // [0] is the input
  };

  Mlp() = default;
  /// Zero-initialized network with the given layer widths (input first).
  explicit Mlp(std::vector<int> dims);
  /// Uniform init in +-sqrt(6 / (fan_in + fan_out)), zero biases.
  Mlp(std::vector<int> dims, Rng& rng);

  int input_dim() const noexcept { return dims_.front(); }
  int output_dim() const noexcept { return dims_.back(); }
  std::size_t layer_count() const noexcept { return dims_.size() - 1; }
  const std::vector<int>& dims() const noexcept { return dims_; }

  Eigen::VectorXd& params() noexcept { return params_; }
  const Eigen::VectorXd& params() const noexcept { return params_; }
  std::size_t parameter_count() const noexcept { return static_cast<std::size_t>(params_.size()); }

  ConstMatrixMap weight(std::size_t layer) const;
  MatrixMap weight(std::size_t layer);
  ConstVectorMap bias(std::size_t layer) const;
  VectorMap bias(std::size_t layer);

  Eigen::MatrixXd forward(const Eigen::MatrixXd& input) const;
  Eigen::MatrixXd forward(const Eigen::MatrixXd& input, Tape& tape) const;

  /// Accumulates d(loss)/d(params) into grad given d(loss)/d(output).
  /// When grad_input is non-null it receives d(loss)/d(input).
  void backward(const Tape& tape, const Eigen::MatrixXd& grad_output, Eigen::VectorXd& grad,
                Eigen::MatrixXd* grad_input = nullptr) const;

 private:
  void layout();

  std::vector<int> dims_;
  std::vector<std::size_t> offsets_;  // weight offset per layer; bias follows the weight
  Eigen::VectorXd params_;
};

/// Adaptive-moment optimizer over a flat parameter vector (minimizes).
class Adam {
 public:
  Adam(std::size_t n, double learning_rate, double beta1 = 0.9, double beta2 = 0.999, double epsilon = 1e-8);
  void step(Eigen::VectorXd& params, const Eigen::VectorXd& grad);

 private:
  double lr_, beta1_, beta2_, eps_;
  long step_count_ = 0;
  Eigen::VectorXd m_, v_;
};

inline double sigmoid(double z) noexcept {
  if (z >= 0) {
    const double e = std::exp(-z);
    return 1.0 / (1.0 + e);
  }
  const double e = std::exp(z);
  return e / (1.0 + e);
}

/// log(1 + exp(z)) without overflow.
inline double softplus(double z) noexcept { return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

}  // namespace dlpt
