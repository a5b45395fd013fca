#include "freqlens/quant.hpp"

#include <cmath>
#include <stdexcept>

#include "freqlens/fft.hpp"

namespace freqlens {

bool valid_quant_bits(int bits) { return bits == 2 || bits == 4 || bits == 8 || bits == 32; }

namespace {

void require_bits(int bits) {
  if (!valid_quant_bits(bits)) {
    throw std::invalid_argument("quantization bits must be one of 2, 4, 8, 32; got " + std::to_string(bits));
  }
}

double step_of(std::span<const float> w, int bits) {
  double max_abs = 0.0;
  for (float v : w) max_abs = std::max(max_abs, static_cast<double>(std::abs(v)));
  const double levels = static_cast<double>((1 << (bits - 1)) - 1);
  return max_abs / levels;
}

}  // namespace

float quant_step(std::span<const float> w, int bits) {
  require_bits(bits);
  if (bits == 32) return 0.0f;
  return static_cast<float>(step_of(w, bits));
}

std::vector<float> quantize_values(std::span<const float> w, int bits) {
  require_bits(bits);
  std::vector<float> out(w.begin(), w.end());
  if (bits == 32) return out;
  // The step stays in double so that re-quantizing reproduces it exactly.
  const double step = step_of(w, bits);
  if (step == 0.0) return out;
  for (auto& v : out) v = static_cast<float>(std::round(static_cast<double>(v) / step) * step);
  return out;
}

Tensor quantize_weights(const Tensor& w, int bits) {
  require_bits(bits);
  if (bits == 32) return w;
  auto q = quantize_values(w.data(), bits);
  const bool rec = detail::needs_graph({&w});
  return detail::make_result(w.shape(), std::move(q), rec, {w},
                             [w](std::span<const float> g) { detail::accumulate_grad(w, g); }, "quantize_weights");
}

std::vector<float> apply_bin_gain(std::span<const float> w, int64_t rows, int64_t row_len,
                                  std::span<const double> gain) {
  if (static_cast<int64_t>(gain.size()) != row_len || static_cast<int64_t>(w.size()) != rows * row_len) {
    throw std::invalid_argument("frequency mask length " + std::to_string(gain.size()) +
                                " does not match kernel row length " + std::to_string(row_len));
  }
  std::vector<float> out(w.size());
  std::vector<fft::Complex> buf(static_cast<size_t>(row_len));
  for (int64_t r = 0; r < rows; ++r) {
    for (int64_t k = 0; k < row_len; ++k) buf[k] = w[r * row_len + k];
    fft::dft1d_inplace(buf, false);
    for (int64_t k = 0; k < row_len; ++k) buf[k] *= gain[k];
    fft::dft1d_inplace(buf, true);
    for (int64_t k = 0; k < row_len; ++k) out[r * row_len + k] = static_cast<float>(buf[k].real());
  }
  return out;
}

Tensor fat_transform(const Tensor& w, const Tensor& logits) {
  if (w.rank() != 4) throw std::invalid_argument("fat_transform: expected conv weight [c_out, c_in, k, k]");
  const int64_t rows = w.dim(0);
  const int64_t row_len = w.dim(1) * w.dim(2) * w.dim(3);
  if (logits.numel() != row_len) {
    throw std::invalid_argument("fat_transform: mask length " + std::to_string(logits.numel()) +
                                " does not match c_in*k*k = " + std::to_string(row_len));
  }
  std::vector<double> mask(static_cast<size_t>(row_len));
  for (int64_t k = 0; k < row_len; ++k) mask[k] = 1.0 / (1.0 + std::exp(-static_cast<double>(logits.data()[k])));
  auto out = apply_bin_gain(w.data(), rows, row_len, mask);

  const bool rec = detail::needs_graph({&w, &logits});
  return detail::make_result(
      w.shape(), std::move(out), rec, {w, logits},
      [w, logits, mask, rows, row_len](std::span<const float> g) {
        if (w.requires_grad()) detail::accumulate_grad(w, apply_bin_gain(g, rows, row_len, mask));
        if (logits.requires_grad()) {
          std::vector<double> dmask(static_cast<size_t>(row_len), 0.0);
          std::vector<fft::Complex> wf(static_cast<size_t>(row_len)), gf(static_cast<size_t>(row_len));
          auto wd = w.data();
          for (int64_t r = 0; r < rows; ++r) {
            for (int64_t k = 0; k < row_len; ++k) {
              wf[k] = wd[r * row_len + k];
              gf[k] = g[r * row_len + k];
            }
            fft::dft1d_inplace(wf, false);
            fft::dft1d_inplace(gf, false);
            for (int64_t k = 0; k < row_len; ++k) dmask[k] += (wf[k] * std::conj(gf[k])).real();
          }
          std::vector<float> dlogits(static_cast<size_t>(row_len));
          for (int64_t k = 0; k < row_len; ++k) {
            dlogits[k] = static_cast<float>(dmask[k] / static_cast<double>(row_len) * mask[k] * (1.0 - mask[k]));
          }
          detail::accumulate_grad(logits, dlogits);
        }
      },
      "fat_transform");
}

}  // namespace freqlens
