#pragma once

#include <span>
#include <vector>

#include "freqlens/tensor.hpp"

namespace freqlens {

bool valid_quant_bits(int bits);

/// Grid step for symmetric per-tensor quantization: max|w| / (2^(bits-1) - 1).
float quant_step(std::span<const float> w, int bits);

/// round(w / step) * step; bits == 32 or an all-zero tensor passes through.
std::vector<float> quantize_values(std::span<const float> w, int bits);

/// Fake quantization with a straight-through gradient.
Tensor quantize_weights(const Tensor& w, int bits);

/// Frequency-aware transformation of a conv weight [c_out, c_in, k, k]:
/// each flattened row of length c_in*k*k is transformed with a 1-D DFT,
/// scaled per bin by sigmoid(logits), inverse transformed and truncated to
/// its real part. Differentiable in both the weight and the mask logits.
Tensor fat_transform(const Tensor& w, const Tensor& logits);

/// Same transform with an explicit per-bin gain (no sigmoid), not recorded.
std::vector<float> apply_bin_gain(std::span<const float> w, int64_t rows, int64_t row_len,
                                  std::span<const double> gain);

}  // namespace freqlens
