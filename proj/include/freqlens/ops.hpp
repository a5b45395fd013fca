#pragma once

#include <span>
#include <vector>

#include "freqlens/tensor.hpp"

namespace freqlens::ops {

// Elementwise and reductions. Shapes must match exactly; the only
// broadcasts in the engine are bias-add and scalar scaling.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, float factor);
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
Tensor reshape(const Tensor& a, const Shape& shape);

Tensor relu(const Tensor& x);
Tensor hardtanh(const Tensor& x, float lo = -1.0f, float hi = 1.0f);

/// x: B×C×H×W, w: O×C×k×k (square kernels), no bias.
Tensor conv2d(const Tensor& x, const Tensor& w, int stride, int pad);

struct BatchNormState {
  Tensor running_mean;
  Tensor running_var;
  float momentum = 0.1f;
  float eps = 1e-5f;
};

/// Per-channel normalization. In training mode batch statistics are used and
/// the running estimates are updated in place.
Tensor batch_norm2d(const Tensor& x, const Tensor& gamma, const Tensor& beta, BatchNormState& state, bool training);

/// Parameter-free residual shortcut: spatial subsample by `stride`, then
/// zero-pad channels to `out_channels`.
Tensor shortcut_pad(const Tensor& x, int stride, int64_t out_channels);

/// B×C×H×W -> B×C.
Tensor global_avg_pool(const Tensor& x);

/// x: B×F, w: K×F, b: K (optional) -> B×K.
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);

/// Mean softmax cross-entropy over the batch.
Tensor cross_entropy(const Tensor& logits, std::span<const int> labels);

/// Mean over batch and classes of BCE(sigmoid(logit), target).
Tensor soft_label_bce(const Tensor& logits, const Tensor& targets);

/// Sum over the batch of KL(p || softmax(logits)); `reference_probs` is constant.
Tensor kl_from_reference(const Tensor& logits, const Tensor& reference_probs);

/// Sum over the batch of max(max_{i!=y} z_i - z_y, -kappa).
Tensor margin_loss(const Tensor& logits, std::span<const int> labels, float kappa);

std::vector<float> softmax_rows(std::span<const float> logits, int64_t rows, int64_t cols);
std::vector<int> argmax_rows(const Tensor& logits);

}  // namespace freqlens::ops
