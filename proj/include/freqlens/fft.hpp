#pragma once

#include <complex>
#include <cstdint>
#include <span>
#include <vector>

namespace freqlens::fft {

using Complex = std::complex<double>;

// Forward transforms are unnormalized (sum x_n e^{-2 pi i k n / N});
// inverse transforms carry the 1/N factor, so inverse(forward(x)) == x.

void dft1d_inplace(std::span<Complex> data, bool inverse);
std::vector<Complex> dft1d(std::span<const double> real_signal);

/// Row-major h×w transform.
void dft2d_inplace(std::span<Complex> data, int64_t h, int64_t w, bool inverse);
std::vector<Complex> dft2d(std::span<const double> real_image, int64_t h, int64_t w);

/// Moves the zero-frequency bin of an h×w grid to (h/2, w/2); `unshift` reverses it.
template <typename T>
std::vector<T> fftshift2d(std::span<const T> grid, int64_t h, int64_t w, bool unshift = false) {
  std::vector<T> out(grid.size());
  const int64_t sh = unshift ? (h - h / 2) : h / 2;
  const int64_t sw = unshift ? (w - w / 2) : w / 2;
  for (int64_t i = 0; i < h; ++i) {
    for (int64_t j = 0; j < w; ++j) {
      out[((i + sh) % h) * w + (j + sw) % w] = grid[i * w + j];
    }
  }
  return out;
}

}  // namespace freqlens::fft
