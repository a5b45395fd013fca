#pragma once

#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "freqlens/tensor.hpp"

namespace freqlens {

enum class SpectrumNorm { Raw, Log1pMinMax };

/// Center-shifted H×W magnitude map; the DC bin sits at (H/2, W/2).
struct SpectrumMap {
  int64_t height = 0;
  int64_t width = 0;
  std::vector<double> values;
  SpectrumNorm norm = SpectrumNorm::Raw;

  double at(int64_t row, int64_t col) const { return values[static_cast<size_t>(row * width + col)]; }
};

/// log(1 + m) followed by min-max scaling to [0,1]. A constant map becomes 0.
void log1p_minmax(std::vector<double>& values);

/// Channel-averaged, center-shifted |DFT2| of one C×H×W image.
SpectrumMap dft2_magnitude(std::span<const float> image, int64_t channels, int64_t height, int64_t width,
                           SpectrumNorm norm = SpectrumNorm::Raw);

/// Mean over batch and channels of the center-shifted |DFT2| of a B×C×H×W batch.
SpectrumMap mean_spectrum(const Tensor& batch, SpectrumNorm norm = SpectrumNorm::Raw);

enum class DiffMode {
  SpectrumOfDifference,  // mean |DFT2(adv - clean)|
  DifferenceOfSpectra,   // | mean |DFT2(adv)| - mean |DFT2(clean)| |
};

SpectrumMap spectrum_diff(const Tensor& clean, const Tensor& adv, SpectrumNorm norm = SpectrumNorm::Log1pMinMax,
                          DiffMode mode = DiffMode::SpectrumOfDifference);

/// Ideal low-pass filter: keep the d×d block of the shifted spectrum whose
/// top-left index is (H/2 - d/2, W/2 - d/2), invert, take the real part and
/// clamp to [0,1]. Differentiable in x (gradient passes where unclamped).
Tensor low_pass_filter(const Tensor& x, int degree);

/// n×d signal matrix (n-length, d-channel), row-major.
struct SignalMatrix {
  int64_t n = 0;
  int64_t d = 0;
  std::vector<double> x;
};

/// (1/n) 1 1^T x: every column replaced by its mean.
SignalMatrix lfi(const SignalMatrix& x);
/// x - lfi(x).
SignalMatrix hfi(const SignalMatrix& x);

inline constexpr double kRatioSentinel = std::numeric_limits<double>::infinity();

/// Mean over the batch of ||LFI||_F / ||HFI||_F where each element's
/// activation is viewed as a C×(H*W) matrix (n = C). Returns +inf when any
/// element has zero high-frequency part.
double lfi_hfi_ratio(const Tensor& activation);
std::vector<double> lfi_hfi_ratio_per_example(const Tensor& activation);

/// Row magnitudes of the 1-D DFT of w reshaped to [c_out, c_in*H*W], unshifted.
struct KernelSpectrum {
  int64_t rows = 0;
  int64_t cols = 0;
  std::vector<double> values;
};
KernelSpectrum kernel_spectrum(const Tensor& weight);

/// Energy (squared magnitude) in the middle (len - 2*band) bins over total.
double hf_energy_fraction(std::span<const double> spectrum_row, int64_t band);

/// Mean hf_energy_fraction over rows with band = len/4.
double mean_hf_energy_fraction(const KernelSpectrum& spectrum);

}  // namespace freqlens
