#pragma once

#include <span>
#include <vector>

#include "freqlens/tensor.hpp"

namespace freqlens {

/// SGD with heavy-ball momentum and L2 weight decay:
///   v <- momentum * v + (grad + weight_decay * w);  w <- w - lr * v
class Sgd {
 public:
  Sgd(std::vector<Tensor> params, float momentum, float weight_decay);

  /// Returns false (and leaves every parameter untouched) when any gradient
  /// is non-finite.
  bool step(float lr);
  void zero_grad();

  const std::vector<std::vector<float>>& velocity() const { return velocity_; }

 private:
  std::vector<Tensor> params_;
  std::vector<std::vector<float>> velocity_;
  float momentum_;
  float weight_decay_;
};

}  // namespace freqlens
