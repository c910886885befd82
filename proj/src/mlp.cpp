#include "dlpt/mlp.hpp"

#include "dlpt/error.hpp"

#include <cmath>

namespace dlpt {

Mlp::Mlp(std::vector<int> dims) : dims_(std::move(dims)) { layout(); }

Mlp::Mlp(std::vector<int> dims, Rng& rng) : dims_(std::move(dims)) {
  layout();
  for (std::size_t l = 0; l < layer_count(); ++l) {
    const double limit = std::sqrt(6.0 / static_cast<double>(dims_[l] + dims_[l + 1]));
    auto w = weight(l);
    for (Eigen::Index c = 0; c < w.cols(); ++c)
      for (Eigen::Index r = 0; r < w.rows(); ++r) w(r, c) = rng.uniform(-limit, limit);
  }
}

void Mlp::layout() {
  if (dims_.size() < 2) throw InvalidInput("network needs at least an input and an output width");
  for (int d : dims_)
    if (d <= 0) throw InvalidInput("layer widths must be positive");
  offsets_.clear();
  std::size_t total = 0;
  for (std::size_t l = 0; l + 1 < dims_.size(); ++l) {
    offsets_.push_back(total);
    total += static_cast<std::size_t>(dims_[l + 1]) * static_cast<std::size_t>(dims_[l] + 1);
  }
  params_ = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(total));
}

Mlp::ConstMatrixMap Mlp::weight(std::size_t l) const {
  return ConstMatrixMap(params_.data() + offsets_[l], dims_[l + 1], dims_[l]);
}
Mlp::MatrixMap Mlp::weight(std::size_t l) { return MatrixMap(params_.data() + offsets_[l], dims_[l + 1], dims_[l]); }
Mlp::ConstVectorMap Mlp::bias(std::size_t l) const {
  return ConstVectorMap(params_.data() + offsets_[l] + static_cast<std::size_t>(dims_[l + 1] * dims_[l]), dims_[l + 1]);
}
Mlp::VectorMap Mlp::bias(std::size_t l) {
  return VectorMap(params_.data() + offsets_[l] + static_cast<std::size_t>(dims_[l + 1] * dims_[l]), dims_[l + 1]);
}

Eigen::MatrixXd Mlp::forward(const Eigen::MatrixXd& input) const {
  if (input.rows() != input_dim()) throw InvalidInput("network input dimension mismatch");
  Eigen::MatrixXd a = input;
  for (std::size_t l = 0; l < layer_count(); ++l) {
    Eigen::MatrixXd z = weight(l) * a;
    z.colwise() += bias(l);
    if (l + 1 < layer_count()) z = z.cwiseMax(0.0);
    a = std::move(z);
  }
  return a;
}

Eigen::MatrixXd Mlp::forward(const Eigen::MatrixXd& input, Tape& tape) const {
  if (input.rows() != input_dim()) throw InvalidInput("network input dimension mismatch");
  tape.activations.resize(layer_count() + 1);
  tape.activations[0] = input;
  for (std::size_t l = 0; l < layer_count(); ++l) {
    Eigen::MatrixXd z = weight(l) * tape.activations[l];
    z.colwise() += bias(l);
    if (l + 1 < layer_count()) z = z.cwiseMax(0.0);
    tape.activations[l + 1] = std::move(z);
  }
  return tape.activations.back();
}

void Mlp::backward(const Tape& tape, const Eigen::MatrixXd& grad_output, Eigen::VectorXd& grad,
                   Eigen::MatrixXd* grad_input) const {
  if (grad.size() != params_.size()) grad = Eigen::VectorXd::Zero(params_.size());
  Eigen::MatrixXd delta = grad_output;
  for (std::size_t l = layer_count(); l-- > 0;) {
    if (l + 1 < layer_count()) {
      // Rectifier derivative, taken as 0 at the kink.
      delta = (tape.activations[l + 1].array() > 0.0).select(delta, 0.0);
    }
    MatrixMap gw(grad.data() + offsets_[l], dims_[l + 1], dims_[l]);
    VectorMap gb(grad.data() + offsets_[l] + static_cast<std::size_t>(dims_[l + 1] * dims_[l]), dims_[l + 1]);
    gw.noalias() += delta * tape.activations[l].transpose();
    gb.noalias() += delta.rowwise().sum();
    if (l > 0 || grad_input != nullptr) {
      Eigen::MatrixXd next = weight(l).transpose() * delta;
      if (l == 0) {
        *grad_input = std::move(next);
      } else {
        delta = std::move(next);
      }
    }
  }
}

Adam::Adam(std::size_t n, double learning_rate, double beta1, double beta2, double epsilon)
    : lr_(learning_rate),
      beta1_(beta1),
      beta2_(beta2),
      eps_(epsilon),
      m_(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n))),
      v_(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n))) {}

void Adam::step(Eigen::VectorXd& params, const Eigen::VectorXd& grad) {
  ++step_count_;
  m_ = beta1_ * m_ + (1.0 - beta1_) * grad;
  v_ = beta2_ * v_ + (1.0 - beta2_) * grad.cwiseAbs2();
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(step_count_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(step_count_));
  params.array() -= lr_ * (m_.array() / c1) / ((v_.array() / c2).sqrt() + eps_);
}

}  // namespace dlpt
