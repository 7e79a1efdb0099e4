#pragma once

#include <vector>

#include "ssdg/model.hpp"

namespace ssdg {

/// SGD with heavy-ball momentum and L2 weight decay:
///   v <- momentum * v + (g + weight_decay * w);  w <- w - lr * v
/// Parameters whose component received no gradient are skipped entirely.
template <typename Scalar>
class SgdMomentum {
 public:
  using Matrix = MatrixX<Scalar>;

  SgdMomentum() = default;
  SgdMomentum(double momentum, double weight_decay) : momentum_(momentum), weight_decay_(weight_decay) {}

  void step(ModelBundle<Scalar>& bundle, const BundleGradients<Scalar>& grads, double lr) {
    auto params = bundle.named_parameters();
    const auto flat = grads.flat();
    const auto touched = grads.flat_touched();
    if (flat.size() != params.size()) throw ShapeError("optimizer: gradient layout does not match bundle");
    if (velocity_.empty()) {
      for (const auto& p : params) velocity_.push_back(Matrix::Zero(p.value->rows(), p.value->cols()));
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
      if (!touched[i]) continue;
      Matrix& w = *params[i].value;
      velocity_[i] = static_cast<Scalar>(momentum_) * velocity_[i] + *flat[i] +
                     static_cast<Scalar>(weight_decay_) * w;
      w -= static_cast<Scalar>(lr) * velocity_[i];
    }
  }

  std::vector<Matrix>& velocity() { return velocity_; }
  const std::vector<Matrix>& velocity() const { return velocity_; }
  double momentum() const { return momentum_; }
  double weight_decay() const { return weight_decay_; }

 private:
  double momentum_ = 0.9;
  double weight_decay_ = 0.0;
  std::vector<Matrix> velocity_;
};

}  // namespace ssdg
