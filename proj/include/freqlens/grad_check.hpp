#pragma once

#include <cstdint>
#include <span>
#include <unordered_map>
#include <vector>

#include "freqlens/network.hpp"

namespace freqlens {

struct GradCheckResult {
  double max_rel_error = 0.0;
  int64_t samples = 0;
  /// Set when the network has no trainable parameter to sample.
  bool vacuous = false;
};

/// Compares backprop gradients of the mean cross-entropy against central
/// finite differences. The differences are taken on an independent float64
/// interpreter of the same layer stack, so the comparison is not limited by
/// float32 rounding in the loss. Per coordinate the error is
/// |analytic - fd| / max(|analytic|, |fd|, 1e-8); the maximum is returned.
/// Quantized layers are rejected (their straight-through gradient is not
/// the derivative of the forward map).
GradCheckResult grad_check(Network& net, const Tensor& images, std::span<const int> labels, double fd_step,
                           int samples_per_tensor = 8, uint64_t seed = 0);

/// Float64 forward pass of `net` with parameter values taken from
/// `overrides` where present (keyed by tensor storage) and from the network
/// otherwise. Returns logits (B×K) in row-major order.
using ParamOverrides = std::unordered_map<const TensorImpl*, std::vector<double>>;
std::vector<double> reference_forward(const Network& net, std::span<const double> images, int64_t batch,
                                      const ParamOverrides& overrides = {});

double reference_cross_entropy(std::span<const double> logits, std::span<const int> labels, int64_t classes);

}  // namespace freqlens
