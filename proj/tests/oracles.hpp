// Independent reference implementations used as test oracles. Everything here
// is deliberately naive (direct summation, double precision).
#pragma once

#include <cmath>
#include <complex>
#include <numbers>
#include <random>
#include <vector>

#include "freqlens/network.hpp"
#include "freqlens/tensor.hpp"

namespace oracle {

using cd = std::complex<double>;

inline std::vector<cd> dft1(const std::vector<double>& x) {
  const size_t n = x.size();
  std::vector<cd> out(n);
  for (size_t k = 0; k < n; ++k) {
    cd acc = 0;
    for (size_t t = 0; t < n; ++t) acc += x[t] * std::polar(1.0, -2.0 * std::numbers::pi * double(k * t) / double(n));
    out[k] = acc;
  }
  return out;
}

inline std::vector<cd> dft2(const std::vector<cd>& x, int64_t h, int64_t w, bool inverse = false) {
  std::vector<cd> out(x.size());
  const double sgn = inverse ? 1.0 : -1.0;
  for (int64_t u = 0; u < h; ++u)
    for (int64_t v = 0; v < w; ++v) {
      cd acc = 0;
      for (int64_t i = 0; i < h; ++i)
        for (int64_t j = 0; j < w; ++j)
          acc += x[i * w + j] *
                 std::polar(1.0, sgn * 2.0 * std::numbers::pi * (double(u * i) / double(h) + double(v * j) / double(w)));
      out[u * w + v] = inverse ? acc / double(h * w) : acc;
    }
  return out;
}

/// Centered |DFT2| of a real h×w plane: zero frequency at (h/2, w/2).
inline std::vector<double> centered_magnitude(const std::vector<double>& plane, int64_t h, int64_t w) {
  std::vector<cd> c(plane.begin(), plane.end());
  auto f = dft2(c, h, w);
  std::vector<double> out(plane.size());
  for (int64_t u = 0; u < h; ++u)
    for (int64_t v = 0; v < w; ++v) out[((u + h / 2) % h) * w + (v + w / 2) % w] = std::abs(f[u * w + v]);
  return out;
}

inline std::vector<float> uniform(size_t n, std::mt19937_64& rng, float lo = 0.0f, float hi = 1.0f) {
  std::uniform_real_distribution<float> u(lo, hi);
  std::vector<float> v(n);
  for (auto& x : v) x = u(rng);
  return v;
}

inline std::vector<double> uniform_d(size_t n, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(n);
  for (auto& x : v) x = u(rng);
  return v;
}

inline freqlens::Tensor random_images(int64_t b, int64_t c, int64_t h, int64_t w, std::mt19937_64& rng) {
  return freqlens::Tensor::from({b, c, h, w}, uniform(size_t(b * c * h * w), rng));
}

inline std::vector<int> random_labels(int64_t b, int k, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> d(0, k - 1);
  std::vector<int> y(static_cast<size_t>(b));
  for (auto& v : y) v = d(rng);
  return y;
}

/// Small conv net: conv-bn-act [residual] pool linear, with random shapes.
inline freqlens::Network random_micro_net(std::mt19937_64& rng, int64_t c, int64_t hw, int classes) {
  using freqlens::LayerKind;
  using freqlens::LayerSpec;
  std::uniform_int_distribution<int> coin(0, 1);
  std::uniform_int_distribution<int64_t> width(2, 5);
  const int64_t w1 = width(rng);
  std::vector<LayerSpec> specs{LayerSpec::conv(c, w1, 3, 1, 1), LayerSpec::batch_norm(w1),
                               LayerSpec::activation(coin(rng) ? LayerKind::HardTanh : LayerKind::ReLU)};
  int64_t cur = w1;
  if (coin(rng)) {
    const int stride = coin(rng) ? 2 : 1;
    const int64_t out = cur + (stride == 2 ? 2 : 0);
    specs.push_back(LayerSpec::residual({LayerSpec::conv(cur, out, 3, stride, 1), LayerSpec::batch_norm(out),
                                         LayerSpec::activation(LayerKind::ReLU), LayerSpec::conv(out, out, 3, 1, 1),
                                         LayerSpec::batch_norm(out)},
                                        stride, cur, out));
    cur = out;
  }
  specs.push_back(LayerSpec::pool());
  specs.push_back(LayerSpec::dense(cur, classes));
  return freqlens::Network(specs, c, hw, hw, rng());
}

// ---- linear CKA via explicit HSIC ------------------------------------------

using Mat = std::vector<std::vector<double>>;

inline Mat random_mat(int64_t m, int64_t p, std::mt19937_64& rng) {
  Mat a(m);
  for (auto& row : a) row = oracle::uniform_d(p, rng);
  return a;
}

inline Mat matmul(const Mat& a, const Mat& b) {
  Mat c(a.size(), std::vector<double>(b[0].size(), 0.0));
  for (size_t i = 0; i < a.size(); ++i)
    for (size_t k = 0; k < b.size(); ++k)
      for (size_t j = 0; j < b[0].size(); ++j) c[i][j] += a[i][k] * b[k][j];
  return c;
}

inline Mat transpose(const Mat& a) {
  Mat t(a[0].size(), std::vector<double>(a.size()));
  for (size_t i = 0; i < a.size(); ++i)
    for (size_t j = 0; j < a[0].size(); ++j) t[j][i] = a[i][j];
  return t;
}

// Gram-Schmidt on a random square matrix.
inline Mat random_orthogonal(int64_t p, std::mt19937_64& rng) {
  Mat q = random_mat(p, p, rng);
  for (int64_t i = 0; i < p; ++i) {
    for (int64_t j = 0; j < i; ++j) {
      double d = 0;
      for (int64_t k = 0; k < p; ++k) d += q[i][k] * q[j][k];
      for (int64_t k = 0; k < p; ++k) q[i][k] -= d * q[j][k];
    }
    double n = 0;
    for (double v : q[i]) n += v * v;
    for (double& v : q[i]) v /= std::sqrt(n);
  }
  return q;
}

// tr(K H L H) with H = I - 11^T/m.
inline double hsic(const Mat& k, const Mat& l) {
  const size_t m = k.size();
  Mat h(m, std::vector<double>(m, -1.0 / double(m)));
  for (size_t i = 0; i < m; ++i) h[i][i] += 1.0;
  auto khlh = matmul(matmul(matmul(k, h), l), h);
  double tr = 0;
  for (size_t i = 0; i < m; ++i) tr += khlh[i][i];
  return tr / double((m - 1) * (m - 1));
}

inline double cka_oracle(const Mat& x, const Mat& y) {
  auto k = matmul(x, transpose(x));
  auto l = matmul(y, transpose(y));
  return hsic(k, l) / std::sqrt(hsic(k, k) * hsic(l, l));
}

}  // namespace oracle
