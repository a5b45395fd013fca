#include "freqlens/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "freqlens/fft.hpp"

namespace freqlens {

void log1p_minmax(std::vector<double>& values) {
  if (values.empty()) return;
  for (auto& v : values) v = std::log1p(v);
  const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  const double mn = *lo, range = *hi - *lo;
  for (auto& v : values) v = range > 0.0 ? (v - mn) / range : 0.0;
}

namespace {

void check_spatial(const Tensor& t, const char* op) {
  if (t.rank() != 4) throw std::invalid_argument(std::string(op) + ": expected B×C×H×W, got " + shape_str(t.shape()));
}

// Accumulates centered |DFT2| of each plane of `planes` (count × H×W) into acc.
void accumulate_magnitude(std::span<const float> planes, int64_t count, int64_t h, int64_t w,
                          std::vector<double>& acc) {
  std::vector<fft::Complex> buf(static_cast<size_t>(h * w));
  std::vector<double> mag(buf.size());
  for (int64_t p = 0; p < count; ++p) {
    for (int64_t k = 0; k < h * w; ++k) buf[k] = planes[p * h * w + k];
    fft::dft2d_inplace(buf, h, w, false);
    for (size_t k = 0; k < buf.size(); ++k) mag[k] = std::abs(buf[k]);
    auto shifted = fft::fftshift2d<double>(mag, h, w);
    for (size_t k = 0; k < acc.size(); ++k) acc[k] += shifted[k];
  }
}

SpectrumMap finish(std::vector<double> acc, int64_t h, int64_t w, double count, SpectrumNorm norm) {
  for (auto& v : acc) v /= count;
  if (norm == SpectrumNorm::Log1pMinMax) log1p_minmax(acc);
  return SpectrumMap{h, w, std::move(acc), norm};
}

}  // namespace

SpectrumMap dft2_magnitude(std::span<const float> image, int64_t channels, int64_t height, int64_t width,
                           SpectrumNorm norm) {
  if (height < 2 || width < 2) throw std::invalid_argument("dft2_magnitude: image must be at least 2×2");
  if (static_cast<int64_t>(image.size()) != channels * height * width) {
    throw std::invalid_argument("dft2_magnitude: buffer does not match C×H×W");
  }
  std::vector<double> acc(static_cast<size_t>(height * width), 0.0);
  accumulate_magnitude(image, channels, height, width, acc);
  return finish(std::move(acc), height, width, static_cast<double>(channels), norm);
}

SpectrumMap mean_spectrum(const Tensor& batch, SpectrumNorm norm) {
  check_spatial(batch, "mean_spectrum");
  const int64_t planes = batch.dim(0) * batch.dim(1), h = batch.dim(2), w = batch.dim(3);
  std::vector<double> acc(static_cast<size_t>(h * w), 0.0);
  accumulate_magnitude(batch.data(), planes, h, w, acc);
  return finish(std::move(acc), h, w, static_cast<double>(planes), norm);
}

SpectrumMap spectrum_diff(const Tensor& clean, const Tensor& adv, SpectrumNorm norm, DiffMode mode) {
  check_spatial(clean, "spectrum_diff");
  if (clean.shape() != adv.shape()) {
    throw std::invalid_argument("spectrum_diff: shape mismatch " + shape_str(clean.shape()) + " vs " +
                                shape_str(adv.shape()));
  }
  const int64_t h = clean.dim(2), w = clean.dim(3);
  if (mode == DiffMode::SpectrumOfDifference) {
    std::vector<float> diff(static_cast<size_t>(clean.numel()));
    for (size_t i = 0; i < diff.size(); ++i) diff[i] = adv.data()[i] - clean.data()[i];
    std::vector<double> acc(static_cast<size_t>(h * w), 0.0);
    const int64_t planes = clean.dim(0) * clean.dim(1);
    accumulate_magnitude(diff, planes, h, w, acc);
    return finish(std::move(acc), h, w, static_cast<double>(planes), norm);
  }
  auto a = mean_spectrum(adv, SpectrumNorm::Raw);
  auto c = mean_spectrum(clean, SpectrumNorm::Raw);
  for (size_t i = 0; i < a.values.size(); ++i) a.values[i] = std::abs(a.values[i] - c.values[i]);
  if (norm == SpectrumNorm::Log1pMinMax) log1p_minmax(a.values);
  a.norm = norm;
  return a;
}

namespace {

// Keeps the shifted d×d block; `mask` is indexed in unshifted layout.
std::vector<double> lpf_mask(int64_t h, int64_t w, int degree) {
  std::vector<double> shifted(static_cast<size_t>(h * w), 0.0);
  const int64_t r0 = h / 2 - degree / 2, c0 = w / 2 - degree / 2;
  for (int64_t i = r0; i < r0 + degree; ++i)
    for (int64_t j = c0; j < c0 + degree; ++j) shifted[i * w + j] = 1.0;
  return fft::fftshift2d<double>(shifted, h, w, true);
}

// Re(IDFT2(mask * DFT2(plane))) for every plane; the operator is symmetric.
std::vector<double> apply_mask(std::span<const float> planes, int64_t count, int64_t h, int64_t w,
                               const std::vector<double>& mask) {
  std::vector<double> out(planes.size());
  std::vector<fft::Complex> buf(static_cast<size_t>(h * w));
  for (int64_t p = 0; p < count; ++p) {
    for (int64_t k = 0; k < h * w; ++k) buf[k] = planes[p * h * w + k];
    fft::dft2d_inplace(buf, h, w, false);
    for (size_t k = 0; k < buf.size(); ++k) buf[k] *= mask[k];
    fft::dft2d_inplace(buf, h, w, true);
    for (int64_t k = 0; k < h * w; ++k) out[p * h * w + k] = buf[k].real();
  }
  return out;
}

}  // namespace

Tensor low_pass_filter(const Tensor& x, int degree) {
  check_spatial(x, "low_pass_filter");
  const int64_t h = x.dim(2), w = x.dim(3);
  if (degree < 1 || degree > std::min(h, w)) {
    throw std::invalid_argument("low_pass_filter: degree " + std::to_string(degree) + " outside [1, " +
                                std::to_string(std::min(h, w)) + "]");
  }
  const int64_t planes = x.dim(0) * x.dim(1);
  auto mask = lpf_mask(h, w, degree);
  auto filtered = apply_mask(x.data(), planes, h, w, mask);
  std::vector<float> out(filtered.size());
  std::vector<char> pass(filtered.size());
  for (size_t i = 0; i < out.size(); ++i) {
    out[i] = static_cast<float>(std::clamp(filtered[i], 0.0, 1.0));
    pass[i] = filtered[i] > 0.0 && filtered[i] < 1.0;
  }
  const bool rec = detail::needs_graph({&x});
  return detail::make_result(x.shape(), std::move(out), rec, {x},
                             [x, mask = std::move(mask), pass = std::move(pass), planes, h, w](std::span<const float> g) {
                               std::vector<float> gated(g.size());
                               for (size_t i = 0; i < g.size(); ++i) gated[i] = pass[i] ? g[i] : 0.0f;
                               auto back = apply_mask(gated, planes, h, w, mask);
                               std::vector<float> dx(back.begin(), back.end());
                               detail::accumulate_grad(x, dx);
                             },
                             "low_pass_filter");
}

SignalMatrix lfi(const SignalMatrix& x) {
  SignalMatrix out{x.n, x.d, std::vector<double>(x.x.size())};
  for (int64_t j = 0; j < x.d; ++j) {
    double mean = 0.0;
    for (int64_t i = 0; i < x.n; ++i) mean += x.x[i * x.d + j];
    mean /= static_cast<double>(x.n);
    for (int64_t i = 0; i < x.n; ++i) out.x[i * x.d + j] = mean;
  }
  return out;
}

SignalMatrix hfi(const SignalMatrix& x) {
  auto low = lfi(x);
  for (size_t i = 0; i < low.x.size(); ++i) low.x[i] = x.x[i] - low.x[i];
  return low;
}

std::vector<double> lfi_hfi_ratio_per_example(const Tensor& activation) {
  check_spatial(activation, "lfi_hfi_ratio");
  const int64_t B = activation.dim(0), C = activation.dim(1), P = activation.dim(2) * activation.dim(3);
  auto a = activation.data();
  std::vector<double> ratios(static_cast<size_t>(B));
  for (int64_t b = 0; b < B; ++b) {
    double low = 0.0, high = 0.0;
    for (int64_t p = 0; p < P; ++p) {
      double mean = 0.0;
      for (int64_t c = 0; c < C; ++c) mean += a[(b * C + c) * P + p];
      mean /= static_cast<double>(C);
      low += static_cast<double>(C) * mean * mean;
      for (int64_t c = 0; c < C; ++c) {
        const double d = a[(b * C + c) * P + p] - mean;
        high += d * d;
      }
    }
    ratios[b] = high > 0.0 ? std::sqrt(low) / std::sqrt(high) : kRatioSentinel;
  }
  return ratios;
}

double lfi_hfi_ratio(const Tensor& activation) {
  auto r = lfi_hfi_ratio_per_example(activation);
  double total = 0.0;
  for (double v : r) {
    if (std::isinf(v)) return kRatioSentinel;
    total += v;
  }
  return total / static_cast<double>(r.size());
}

KernelSpectrum kernel_spectrum(const Tensor& weight) {
  if (weight.rank() < 2) throw std::invalid_argument("kernel_spectrum: expected [c_out, ...] weight");
  KernelSpectrum ks;
  ks.rows = weight.dim(0);
  ks.cols = weight.numel() / ks.rows;
  ks.values.resize(static_cast<size_t>(weight.numel()));
  std::vector<fft::Complex> buf(static_cast<size_t>(ks.cols));
  for (int64_t r = 0; r < ks.rows; ++r) {
    for (int64_t k = 0; k < ks.cols; ++k) buf[k] = weight.data()[r * ks.cols + k];
    fft::dft1d_inplace(buf, false);
    for (int64_t k = 0; k < ks.cols; ++k) ks.values[r * ks.cols + k] = std::abs(buf[k]);
  }
  return ks;
}

double hf_energy_fraction(std::span<const double> spectrum_row, int64_t band) {
  const auto len = static_cast<int64_t>(spectrum_row.size());
  if (band < 0 || 2 * band >= len) throw std::invalid_argument("hf_energy_fraction: requires 2*band < row length");
  double total = 0.0, middle = 0.0;
  for (int64_t k = 0; k < len; ++k) {
    const double e = spectrum_row[k] * spectrum_row[k];
    total += e;
    if (k >= band && k < len - band) middle += e;
  }
  return total > 0.0 ? middle / total : 0.0;
}

double mean_hf_energy_fraction(const KernelSpectrum& spectrum) {
  double acc = 0.0;
  for (int64_t r = 0; r < spectrum.rows; ++r) {
    std::span<const double> row(spectrum.values.data() + r * spectrum.cols, static_cast<size_t>(spectrum.cols));
    acc += hf_energy_fraction(row, spectrum.cols / 4);
  }
  return acc / static_cast<double>(spectrum.rows);
}

}  // namespace freqlens
