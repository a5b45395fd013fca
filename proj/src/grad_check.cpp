#include "freqlens/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>

#include "freqlens/ops.hpp"

namespace freqlens {
namespace {

struct DTensor {
  Shape shape;
  std::vector<double> v;
};

std::vector<double> values_of(const Tensor& t, const ParamOverrides& ov) {
  if (auto it = ov.find(t.impl()); it != ov.end()) return it->second;
  return {t.data().begin(), t.data().end()};
}

// Naive O(N^2) circular mask on each row; kept separate from the FFT path.
std::vector<double> naive_fat(const std::vector<double>& w, int64_t rows, int64_t n, const std::vector<double>& logits) {
  std::vector<double> out(w.size(), 0.0);
  std::vector<double> re(static_cast<size_t>(n)), im(static_cast<size_t>(n));
  for (int64_t r = 0; r < rows; ++r) {
    const double* x = w.data() + r * n;
    for (int64_t k = 0; k < n; ++k) {
      double a = 0.0, b = 0.0;
      for (int64_t j = 0; j < n; ++j) {
        const double ang = -2.0 * std::numbers::pi * static_cast<double>(k * j % n) / static_cast<double>(n);
        a += x[j] * std::cos(ang);
        b += x[j] * std::sin(ang);
      }
      const double m = 1.0 / (1.0 + std::exp(-logits[k]));
      re[k] = a * m;
      im[k] = b * m;
    }
    for (int64_t j = 0; j < n; ++j) {
      double a = 0.0;
      for (int64_t k = 0; k < n; ++k) {
        const double ang = 2.0 * std::numbers::pi * static_cast<double>(k * j % n) / static_cast<double>(n);
        a += re[k] * std::cos(ang) - im[k] * std::sin(ang);
      }
      out[r * n + j] = a / static_cast<double>(n);
    }
  }
  return out;
}

DTensor ref_conv(const DTensor& x, const std::vector<double>& w, const LayerSpec& s) {
  const int64_t B = x.shape[0], C = x.shape[1], H = x.shape[2], W = x.shape[3];
  const int64_t O = s.out_channels, k = s.kernel;
  const int64_t Ho = (H + 2 * s.pad - k) / s.stride + 1, Wo = (W + 2 * s.pad - k) / s.stride + 1;
  DTensor y{{B, O, Ho, Wo}, std::vector<double>(static_cast<size_t>(B * O * Ho * Wo), 0.0)};
  for (int64_t b = 0; b < B; ++b)
    for (int64_t o = 0; o < O; ++o)
      for (int64_t i = 0; i < Ho; ++i)
        for (int64_t j = 0; j < Wo; ++j) {
          double acc = 0.0;
          for (int64_t c = 0; c < C; ++c)
            for (int64_t ki = 0; ki < k; ++ki)
              for (int64_t kj = 0; kj < k; ++kj) {
                const int64_t ih = i * s.stride - s.pad + ki, iw = j * s.stride - s.pad + kj;
                if (ih < 0 || ih >= H || iw < 0 || iw >= W) continue;
                acc += w[((o * C + c) * k + ki) * k + kj] * x.v[((b * C + c) * H + ih) * W + iw];
              }
          y.v[((b * O + o) * Ho + i) * Wo + j] = acc;
        }
  return y;
}

DTensor ref_bn(const DTensor& x, const Layer& l, bool training, const ParamOverrides& ov) {
  const int64_t B = x.shape[0], C = x.shape[1], HW = x.shape[2] * x.shape[3];
  auto gamma = values_of(l.weight, ov);
  auto beta = values_of(l.bias, ov);
  DTensor y{x.shape, std::vector<double>(x.v.size())};
  for (int64_t c = 0; c < C; ++c) {
    double mu, var;
    if (training) {
      double s = 0.0;
      for (int64_t b = 0; b < B; ++b)
        for (int64_t i = 0; i < HW; ++i) s += x.v[(b * C + c) * HW + i];
      mu = s / static_cast<double>(B * HW);
      double ss = 0.0;
      for (int64_t b = 0; b < B; ++b)
        for (int64_t i = 0; i < HW; ++i) ss += std::pow(x.v[(b * C + c) * HW + i] - mu, 2);
      var = ss / static_cast<double>(B * HW);
    } else {
      mu = l.bn.running_mean.data()[c];
      var = l.bn.running_var.data()[c];
    }
    const double inv = 1.0 / std::sqrt(var + l.bn.eps);
    for (int64_t b = 0; b < B; ++b)
      for (int64_t i = 0; i < HW; ++i) {
        const int64_t idx = (b * C + c) * HW + i;
        y.v[idx] = gamma[c] * (x.v[idx] - mu) * inv + beta[c];
      }
  }
  return y;
}

std::vector<double> effective(const Layer& l, const ParamOverrides& ov) {
  auto w = values_of(l.weight, ov);
  if (l.spec.fat) {
    const int64_t n = l.weight.numel() / l.weight.dim(0);
    w = naive_fat(w, l.weight.dim(0), n, values_of(l.fat_logits, ov));
  }
  return w;
}

DTensor run(const std::vector<Layer>& layers, DTensor x, bool training, const ParamOverrides& ov) {
  for (const auto& l : layers) {
    if (l.spec.quant_bits != 32) throw std::invalid_argument("grad_check: quantized layers are not differentiable");
    switch (l.spec.kind) {
      case LayerKind::Conv2d:
        x = ref_conv(x, effective(l, ov), l.spec);
        break;
      case LayerKind::BatchNorm2d:
        x = ref_bn(x, l, training, ov);
        break;
      case LayerKind::HardTanh:
        for (auto& v : x.v) v = std::clamp(v, -1.0, 1.0);
        break;
      case LayerKind::ReLU:
        for (auto& v : x.v) v = std::max(v, 0.0);
        break;
      case LayerKind::Residual: {
        const int64_t B = x.shape[0], C = x.shape[1], H = x.shape[2], W = x.shape[3];
        const int64_t s = l.spec.stride, O = l.spec.out_channels;
        const int64_t Ho = (H + s - 1) / s, Wo = (W + s - 1) / s, front = (O - C) / 2;
        DTensor body = run(l.body, x, training, ov);
        for (int64_t b = 0; b < B; ++b)
          for (int64_t c = 0; c < C; ++c)
            for (int64_t i = 0; i < Ho; ++i)
              for (int64_t j = 0; j < Wo; ++j)
                body.v[((b * O + c + front) * Ho + i) * Wo + j] += x.v[((b * C + c) * H + i * s) * W + j * s];
        for (auto& v : body.v) v = std::max(v, 0.0);
        x = std::move(body);
        break;
      }
      case LayerKind::GlobalAvgPool: {
        const int64_t B = x.shape[0], C = x.shape[1], HW = x.shape[2] * x.shape[3];
        DTensor y{{B, C}, std::vector<double>(static_cast<size_t>(B * C), 0.0)};
        for (int64_t i = 0; i < B * C; ++i) {
          for (int64_t k = 0; k < HW; ++k) y.v[i] += x.v[i * HW + k];
          y.v[i] /= static_cast<double>(HW);
        }
        x = std::move(y);
        break;
      }
      case LayerKind::Linear: {
        const int64_t B = x.shape[0], F = l.spec.in_channels, K = l.spec.out_channels;
        auto w = values_of(l.weight, ov);
        std::vector<double> bias = l.bias.defined() ? values_of(l.bias, ov) : std::vector<double>(K, 0.0);
        DTensor y{{B, K}, std::vector<double>(static_cast<size_t>(B * K))};
        for (int64_t b = 0; b < B; ++b)
          for (int64_t k = 0; k < K; ++k) {
            double acc = bias[k];
            for (int64_t f = 0; f < F; ++f) acc += w[k * F + f] * x.v[b * F + f];
            y.v[b * K + k] = acc;
          }
        x = std::move(y);
        break;
      }
    }
  }
  return x;
}

}  // namespace

std::vector<double> reference_forward(const Network& net, std::span<const double> images, int64_t batch,
                                      const ParamOverrides& overrides) {
  DTensor x{{batch, net.in_channels(), net.height(), net.width()}, {images.begin(), images.end()}};
  if (static_cast<int64_t>(x.v.size()) != shape_numel(x.shape)) {
    throw std::invalid_argument("reference_forward: image buffer does not match network input");
  }
  return run(net.layers(), std::move(x), net.training(), overrides).v;
}

double reference_cross_entropy(std::span<const double> logits, std::span<const int> labels, int64_t classes) {
  const int64_t B = static_cast<int64_t>(labels.size());
  double total = 0.0;
  for (int64_t b = 0; b < B; ++b) {
    const double* r = logits.data() + b * classes;
    const double mx = *std::max_element(r, r + classes);
    double s = 0.0;
    for (int64_t k = 0; k < classes; ++k) s += std::exp(r[k] - mx);
    total += std::log(s) + mx - r[labels[b]];
  }
  return total / static_cast<double>(B);
}

GradCheckResult grad_check(Network& net, const Tensor& images, std::span<const int> labels, double fd_step,
                           int samples_per_tensor, uint64_t seed) {
  GradCheckResult result;
  std::vector<Tensor> params;
  for (auto& p : net.parameters()) {
    if (p.requires_grad()) params.push_back(p);
  }
  if (params.empty()) {
    result.vacuous = true;
    return result;
  }

  // Analytic pass; batchnorm running statistics are restored afterwards.
  std::vector<std::pair<Tensor, std::vector<float>>> saved;
  for (auto& nt : net.state()) {
    if (!nt.trainable) saved.emplace_back(nt.tensor, std::vector<float>(nt.tensor.data().begin(), nt.tensor.data().end()));
  }
  net.zero_grad();
  {
    Tensor x = images.detach();
    auto loss = ops::cross_entropy(net.forward(x), labels);
    loss.backward();
  }
  for (auto& [t, v] : saved) std::copy(v.begin(), v.end(), t.data().begin());

  const int64_t batch = images.dim(0);
  const std::vector<double> img(images.data().begin(), images.data().end());
  std::mt19937_64 rng(seed);
  ParamOverrides ov;
  for (auto& p : params) {
    const int64_t n = p.numel();
    std::vector<int64_t> idx(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) idx[i] = i;
    std::shuffle(idx.begin(), idx.end(), rng);
    idx.resize(static_cast<size_t>(std::min<int64_t>(n, samples_per_tensor)));
    std::vector<double> base(p.data().begin(), p.data().end());
    for (int64_t i : idx) {
      auto plus = base;
      auto minus = base;
      plus[i] += fd_step;
      minus[i] -= fd_step;
      ov[p.impl()] = plus;
      const double lp = reference_cross_entropy(reference_forward(net, img, batch, ov), labels, net.num_classes());
      ov[p.impl()] = minus;
      const double lm = reference_cross_entropy(reference_forward(net, img, batch, ov), labels, net.num_classes());
      const double fd = (lp - lm) / (2.0 * fd_step);
      const double an = p.grad()[i];
      const double denom = std::max({std::abs(an), std::abs(fd), 1e-8});
      result.max_rel_error = std::max(result.max_rel_error, std::abs(an - fd) / denom);
      ++result.samples;
    }
    ov.erase(p.impl());
  }
  return result;
}

}  // namespace freqlens
