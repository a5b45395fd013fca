#include "freqlens/optim.hpp"

#include <stdexcept>

#include "freqlens/log.hpp"

namespace freqlens {

Sgd::Sgd(std::vector<Tensor> params, float momentum, float weight_decay)
    : params_(std::move(params)), momentum_(momentum), weight_decay_(weight_decay) {
  for (const auto& p : params_) velocity_.emplace_back(static_cast<size_t>(p.numel()), 0.0f);
}

bool Sgd::step(float lr) {
  if (!(lr > 0.0f)) throw std::invalid_argument("sgd: learning rate must be positive");
  for (const auto& p : params_) {
    if (p.has_grad() && !all_finite(p.grad())) {
      log::warn("sgd: non-finite gradient, update skipped");
      return false;
    }
  }
  for (size_t i = 0; i < params_.size(); ++i) {
    auto& p = params_[i];
    auto w = p.data();
    auto& v = velocity_[i];
    const bool has = p.has_grad();
    std::span<const float> g = has ? std::span<const float>(p.grad()) : std::span<const float>();
    for (size_t k = 0; k < w.size(); ++k) {
      const float gk = (has ? g[k] : 0.0f) + weight_decay_ * w[k];
      v[k] = momentum_ * v[k] + gk;
      w[k] -= lr * v[k];
    }
  }
  return true;
}

void Sgd::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

}  // namespace freqlens
