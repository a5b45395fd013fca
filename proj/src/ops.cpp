#include "freqlens/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace freqlens::ops {
namespace {

using RowMat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                                shape_str(b.shape()));
  }
}

void require_rank(const Tensor& t, size_t rank, const char* op) {
  if (t.rank() != rank) {
    throw std::invalid_argument(std::string(op) + ": expected rank " + std::to_string(rank) + ", got shape " +
                                shape_str(t.shape()));
  }
}

void check_labels(std::span<const int> labels, int64_t rows, int64_t classes, const char* op) {
  if (static_cast<int64_t>(labels.size()) != rows) {
    throw std::invalid_argument(std::string(op) + ": label count does not match batch size");
  }
  for (int y : labels) {
    if (y < 0 || y >= classes) throw std::invalid_argument(std::string(op) + ": label out of range");
  }
}

struct ConvGeom {
  int64_t batch, channels, height, width, out_channels, kernel, out_h, out_w;
  int stride, pad;
  int64_t col_rows() const { return channels * kernel * kernel; }
  int64_t col_cols() const { return out_h * out_w; }
};

void im2col(const float* img, const ConvGeom& g, float* cols) {
  const int64_t ncols = g.col_cols();
  for (int64_t c = 0; c < g.channels; ++c) {
    for (int64_t ki = 0; ki < g.kernel; ++ki) {
      for (int64_t kj = 0; kj < g.kernel; ++kj) {
        float* row = cols + ((c * g.kernel + ki) * g.kernel + kj) * ncols;
        for (int64_t oh = 0; oh < g.out_h; ++oh) {
          const int64_t ih = oh * g.stride - g.pad + ki;
          float* dst = row + oh * g.out_w;
          if (ih < 0 || ih >= g.height) {
            std::fill(dst, dst + g.out_w, 0.0f);
            continue;
          }
          const float* src = img + (c * g.height + ih) * g.width;
          for (int64_t ow = 0; ow < g.out_w; ++ow) {
            const int64_t iw = ow * g.stride - g.pad + kj;
            dst[ow] = (iw >= 0 && iw < g.width) ? src[iw] : 0.0f;
          }
        }
      }
    }
  }
}

void col2im(const float* cols, const ConvGeom& g, float* img) {
  const int64_t ncols = g.col_cols();
  for (int64_t c = 0; c < g.channels; ++c) {
    for (int64_t ki = 0; ki < g.kernel; ++ki) {
      for (int64_t kj = 0; kj < g.kernel; ++kj) {
        const float* row = cols + ((c * g.kernel + ki) * g.kernel + kj) * ncols;
        for (int64_t oh = 0; oh < g.out_h; ++oh) {
          const int64_t ih = oh * g.stride - g.pad + ki;
          if (ih < 0 || ih >= g.height) continue;
          float* dst = img + (c * g.height + ih) * g.width;
          const float* src = row + oh * g.out_w;
          for (int64_t ow = 0; ow < g.out_w; ++ow) {
            const int64_t iw = ow * g.stride - g.pad + kj;
            if (iw >= 0 && iw < g.width) dst[iw] += src[ow];
          }
        }
      }
    }
  }
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  std::vector<float> out(a.data().begin(), a.data().end());
  auto bd = b.data();
  for (size_t i = 0; i < out.size(); ++i) out[i] += bd[i];
  const bool rec = detail::needs_graph({&a, &b});
  return detail::make_result(a.shape(), std::move(out), rec, {a, b},
                             [a, b](std::span<const float> g) {
                               detail::accumulate_grad(a, g);
                               detail::accumulate_grad(b, g);
                             },
                             "add");
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  std::vector<float> out(a.data().begin(), a.data().end());
  auto bd = b.data();
  for (size_t i = 0; i < out.size(); ++i) out[i] -= bd[i];
  const bool rec = detail::needs_graph({&a, &b});
  return detail::make_result(a.shape(), std::move(out), rec, {a, b},
                             [a, b](std::span<const float> g) {
                               detail::accumulate_grad(a, g);
                               if (b.requires_grad()) {
                                 std::vector<float> neg(g.begin(), g.end());
                                 for (auto& v : neg) v = -v;
                                 detail::accumulate_grad(b, neg);
                               }
                             },
                             "sub");
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  auto ad = a.data();
  auto bd = b.data();
  std::vector<float> out(ad.size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = ad[i] * bd[i];
  const bool rec = detail::needs_graph({&a, &b});
  return detail::make_result(a.shape(), std::move(out), rec, {a, b},
                             [a, b](std::span<const float> g) {
                               auto ad = a.data();
                               auto bd = b.data();
                               std::vector<float> tmp(g.size());
                               if (a.requires_grad()) {
                                 for (size_t i = 0; i < g.size(); ++i) tmp[i] = g[i] * bd[i];
                                 detail::accumulate_grad(a, tmp);
                               }
                               if (b.requires_grad()) {
                                 for (size_t i = 0; i < g.size(); ++i) tmp[i] = g[i] * ad[i];
                                 detail::accumulate_grad(b, tmp);
                               }
                             },
                             "mul");
}

Tensor scale(const Tensor& a, float factor) {
  std::vector<float> out(a.data().begin(), a.data().end());
  for (auto& v : out) v *= factor;
  const bool rec = detail::needs_graph({&a});
  return detail::make_result(a.shape(), std::move(out), rec, {a},
                             [a, factor](std::span<const float> g) {
                               std::vector<float> tmp(g.begin(), g.end());
                               for (auto& v : tmp) v *= factor;
                               detail::accumulate_grad(a, tmp);
                             },
                             "scale");
}

Tensor sum(const Tensor& a) {
  float total = 0.0f;
  for (float v : a.data()) total += v;
  const bool rec = detail::needs_graph({&a});
  return detail::make_result({1}, {total}, rec, {a},
                             [a](std::span<const float> g) {
                               std::vector<float> tmp(static_cast<size_t>(a.numel()), g[0]);
                               detail::accumulate_grad(a, tmp);
                             },
                             "sum");
}

Tensor mean(const Tensor& a) { return scale(sum(a), 1.0f / static_cast<float>(a.numel())); }

Tensor reshape(const Tensor& a, const Shape& shape) {
  if (shape_numel(shape) != a.numel()) {
    throw std::invalid_argument("reshape: cannot view " + shape_str(a.shape()) + " as " + shape_str(shape));
  }
  std::vector<float> out(a.data().begin(), a.data().end());
  const bool rec = detail::needs_graph({&a});
  return detail::make_result(shape, std::move(out), rec, {a},
                             [a](std::span<const float> g) { detail::accumulate_grad(a, g); }, "reshape");
}

Tensor relu(const Tensor& x) {
  auto xd = x.data();
  std::vector<float> out(xd.size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = xd[i] > 0.0f ? xd[i] : 0.0f;
  const bool rec = detail::needs_graph({&x});
  return detail::make_result(x.shape(), std::move(out), rec, {x},
                             [x](std::span<const float> g) {
                               auto xd = x.data();
                               std::vector<float> tmp(g.size());
                               for (size_t i = 0; i < g.size(); ++i) tmp[i] = xd[i] > 0.0f ? g[i] : 0.0f;
                               detail::accumulate_grad(x, tmp);
                             },
                             "relu");
}

Tensor hardtanh(const Tensor& x, float lo, float hi) {
  auto xd = x.data();
  std::vector<float> out(xd.size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = std::clamp(xd[i], lo, hi);
  const bool rec = detail::needs_graph({&x});
  return detail::make_result(x.shape(), std::move(out), rec, {x},
                             [x, lo, hi](std::span<const float> g) {
                               auto xd = x.data();
                               std::vector<float> tmp(g.size());
                               for (size_t i = 0; i < g.size(); ++i) {
                                 tmp[i] = (xd[i] > lo && xd[i] < hi) ? g[i] : 0.0f;
                               }
                               detail::accumulate_grad(x, tmp);
                             },
                             "hardtanh");
}

Tensor conv2d(const Tensor& x, const Tensor& w, int stride, int pad) {
  require_rank(x, 4, "conv2d input");
  require_rank(w, 4, "conv2d weight");
  if (x.dim(1) != w.dim(1)) {
    throw std::invalid_argument("conv2d: input has " + std::to_string(x.dim(1)) + " channels, weight expects " +
                                std::to_string(w.dim(1)));
  }
  if (w.dim(2) != w.dim(3)) throw std::invalid_argument("conv2d: only square kernels are supported");
  if (stride < 1 || pad < 0) throw std::invalid_argument("conv2d: invalid stride/pad");
  ConvGeom g{};
  g.batch = x.dim(0);
  g.channels = x.dim(1);
  g.height = x.dim(2);
  g.width = x.dim(3);
  g.out_channels = w.dim(0);
  g.kernel = w.dim(2);
  g.stride = stride;
  g.pad = pad;
  g.out_h = (g.height + 2 * pad - g.kernel) / stride + 1;
  g.out_w = (g.width + 2 * pad - g.kernel) / stride + 1;
  if (g.out_h < 1 || g.out_w < 1) throw std::invalid_argument("conv2d: kernel larger than padded input");

  const int64_t in_plane = g.channels * g.height * g.width;
  const int64_t out_plane = g.out_channels * g.col_cols();
  std::vector<float> out(static_cast<size_t>(g.batch * out_plane));
  std::vector<float> cols(static_cast<size_t>(g.col_rows() * g.col_cols()));
  ConstMapMat wm(w.data().data(), g.out_channels, g.col_rows());
  for (int64_t b = 0; b < g.batch; ++b) {
    im2col(x.data().data() + b * in_plane, g, cols.data());
    ConstMapMat cm(cols.data(), g.col_rows(), g.col_cols());
    MapMat om(out.data() + b * out_plane, g.out_channels, g.col_cols());
    om.noalias() = wm * cm;
  }

  const bool rec = detail::needs_graph({&x, &w});
  return detail::make_result(
      {g.batch, g.out_channels, g.out_h, g.out_w}, std::move(out), rec, {x, w},
      [x, w, g, in_plane, out_plane](std::span<const float> grad_out) {
        std::vector<float> cols(static_cast<size_t>(g.col_rows() * g.col_cols()));
        std::vector<float> dcols;
        std::vector<float> dx;
        RowMat dw;
        ConstMapMat wm(w.data().data(), g.out_channels, g.col_rows());
        if (w.requires_grad()) dw = RowMat::Zero(g.out_channels, g.col_rows());
        if (x.requires_grad()) {
          dcols.resize(cols.size());
          dx.assign(static_cast<size_t>(g.batch * in_plane), 0.0f);
        }
        for (int64_t b = 0; b < g.batch; ++b) {
          ConstMapMat gm(grad_out.data() + b * out_plane, g.out_channels, g.col_cols());
          if (w.requires_grad()) {
            im2col(x.data().data() + b * in_plane, g, cols.data());
            ConstMapMat cm(cols.data(), g.col_rows(), g.col_cols());
            dw.noalias() += gm * cm.transpose();
          }
          if (x.requires_grad()) {
            MapMat dcm(dcols.data(), g.col_rows(), g.col_cols());
            dcm.noalias() = wm.transpose() * gm;
            col2im(dcols.data(), g, dx.data() + b * in_plane);
          }
        }
        if (w.requires_grad()) detail::accumulate_grad(w, std::span<const float>(dw.data(), dw.size()));
        if (x.requires_grad()) detail::accumulate_grad(x, dx);
      },
      "conv2d");
}

Tensor batch_norm2d(const Tensor& x, const Tensor& gamma, const Tensor& beta, BatchNormState& state,
                    bool training) {
  require_rank(x, 4, "batch_norm2d");
  const int64_t B = x.dim(0), C = x.dim(1), HW = x.dim(2) * x.dim(3);
  if (gamma.numel() != C || beta.numel() != C || state.running_mean.numel() != C ||
      state.running_var.numel() != C) {
    throw std::invalid_argument("batch_norm2d: parameter size does not match " + std::to_string(C) + " channels");
  }
  const int64_t count = B * HW;
  auto xd = x.data();
  std::vector<float> mean_c(static_cast<size_t>(C)), invstd(static_cast<size_t>(C));
  if (training) {
    if (count < 2) throw std::invalid_argument("batch_norm2d: training mode needs more than one value per channel");
    auto rm = state.running_mean.data();
    auto rv = state.running_var.data();
    for (int64_t c = 0; c < C; ++c) {
      double s = 0.0, ss = 0.0;
      for (int64_t b = 0; b < B; ++b) {
        const float* p = xd.data() + (b * C + c) * HW;
        for (int64_t i = 0; i < HW; ++i) s += p[i];
      }
      const double mu = s / static_cast<double>(count);
      for (int64_t b = 0; b < B; ++b) {
        const float* p = xd.data() + (b * C + c) * HW;
        for (int64_t i = 0; i < HW; ++i) {
          const double d = p[i] - mu;
          ss += d * d;
        }
      }
      const double var = ss / static_cast<double>(count);
      const double unbiased = ss / static_cast<double>(count - 1);
      mean_c[c] = static_cast<float>(mu);
      invstd[c] = static_cast<float>(1.0 / std::sqrt(var + state.eps));
      rm[c] = (1.0f - state.momentum) * rm[c] + state.momentum * static_cast<float>(mu);
      rv[c] = (1.0f - state.momentum) * rv[c] + state.momentum * static_cast<float>(unbiased);
    }
  } else {
    auto rm = state.running_mean.data();
    auto rv = state.running_var.data();
    for (int64_t c = 0; c < C; ++c) {
      mean_c[c] = rm[c];
      invstd[c] = 1.0f / std::sqrt(rv[c] + state.eps);
    }
  }

  auto gd = gamma.data();
  auto bd = beta.data();
  std::vector<float> xhat(xd.size()), out(xd.size());
  for (int64_t b = 0; b < B; ++b) {
    for (int64_t c = 0; c < C; ++c) {
      const int64_t off = (b * C + c) * HW;
      for (int64_t i = 0; i < HW; ++i) {
        const float h = (xd[off + i] - mean_c[c]) * invstd[c];
        xhat[off + i] = h;
        out[off + i] = gd[c] * h + bd[c];
      }
    }
  }

  const bool rec = detail::needs_graph({&x, &gamma, &beta});
  return detail::make_result(
      x.shape(), std::move(out), rec, {x, gamma, beta},
      [x, gamma, beta, xhat = std::move(xhat), invstd, training, B, C, HW, count](std::span<const float> g) {
        std::vector<double> sum_g(static_cast<size_t>(C), 0.0), sum_gx(static_cast<size_t>(C), 0.0);
        for (int64_t b = 0; b < B; ++b) {
          for (int64_t c = 0; c < C; ++c) {
            const int64_t off = (b * C + c) * HW;
            for (int64_t i = 0; i < HW; ++i) {
              sum_g[c] += g[off + i];
              sum_gx[c] += static_cast<double>(g[off + i]) * xhat[off + i];
            }
          }
        }
        if (gamma.requires_grad()) {
          std::vector<float> dg(static_cast<size_t>(C));
          for (int64_t c = 0; c < C; ++c) dg[c] = static_cast<float>(sum_gx[c]);
          detail::accumulate_grad(gamma, dg);
        }
        if (beta.requires_grad()) {
          std::vector<float> db(static_cast<size_t>(C));
          for (int64_t c = 0; c < C; ++c) db[c] = static_cast<float>(sum_g[c]);
          detail::accumulate_grad(beta, db);
        }
        if (x.requires_grad()) {
          auto gd = gamma.data();
          std::vector<float> dx(g.size());
          const double n = static_cast<double>(count);
          for (int64_t b = 0; b < B; ++b) {
            for (int64_t c = 0; c < C; ++c) {
              const int64_t off = (b * C + c) * HW;
              const float k = gd[c] * invstd[c];
              if (training) {
                const double mg = sum_g[c] / n, mgx = sum_gx[c] / n;
                for (int64_t i = 0; i < HW; ++i) {
                  dx[off + i] = static_cast<float>(k * (g[off + i] - mg - xhat[off + i] * mgx));
                }
              } else {
                for (int64_t i = 0; i < HW; ++i) dx[off + i] = k * g[off + i];
              }
            }
          }
          detail::accumulate_grad(x, dx);
        }
      },
      "batch_norm2d");
}

Tensor shortcut_pad(const Tensor& x, int stride, int64_t out_channels) {
  require_rank(x, 4, "shortcut_pad");
  const int64_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  if (out_channels < C) throw std::invalid_argument("shortcut_pad: cannot shrink channels");
  const int64_t Ho = (H + stride - 1) / stride, Wo = (W + stride - 1) / stride;
  const int64_t front = (out_channels - C) / 2;
  std::vector<float> out(static_cast<size_t>(B * out_channels * Ho * Wo), 0.0f);
  auto xd = x.data();
  for (int64_t b = 0; b < B; ++b)
    for (int64_t c = 0; c < C; ++c)
      for (int64_t i = 0; i < Ho; ++i)
        for (int64_t j = 0; j < Wo; ++j)
          out[((b * out_channels + c + front) * Ho + i) * Wo + j] = xd[((b * C + c) * H + i * stride) * W + j * stride];
  const bool rec = detail::needs_graph({&x});
  return detail::make_result({B, out_channels, Ho, Wo}, std::move(out), rec, {x},
                             [x, B, C, H, W, Ho, Wo, front, stride, out_channels](std::span<const float> g) {
                               std::vector<float> dx(static_cast<size_t>(x.numel()), 0.0f);
                               for (int64_t b = 0; b < B; ++b)
                                 for (int64_t c = 0; c < C; ++c)
                                   for (int64_t i = 0; i < Ho; ++i)
                                     for (int64_t j = 0; j < Wo; ++j)
                                       dx[((b * C + c) * H + i * stride) * W + j * stride] +=
                                           g[((b * out_channels + c + front) * Ho + i) * Wo + j];
                               detail::accumulate_grad(x, dx);
                             },
                             "shortcut_pad");
}

Tensor global_avg_pool(const Tensor& x) {
  require_rank(x, 4, "global_avg_pool");
  const int64_t B = x.dim(0), C = x.dim(1), HW = x.dim(2) * x.dim(3);
  auto xd = x.data();
  std::vector<float> out(static_cast<size_t>(B * C));
  for (int64_t i = 0; i < B * C; ++i) {
    float s = 0.0f;
    for (int64_t k = 0; k < HW; ++k) s += xd[i * HW + k];
    out[i] = s / static_cast<float>(HW);
  }
  const bool rec = detail::needs_graph({&x});
  return detail::make_result({B, C}, std::move(out), rec, {x},
                             [x, B, C, HW](std::span<const float> g) {
                               std::vector<float> dx(static_cast<size_t>(x.numel()));
                               const float inv = 1.0f / static_cast<float>(HW);
                               for (int64_t i = 0; i < B * C; ++i)
                                 std::fill_n(dx.begin() + i * HW, HW, g[i] * inv);
                               detail::accumulate_grad(x, dx);
                             },
                             "global_avg_pool");
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  require_rank(x, 2, "linear input");
  require_rank(w, 2, "linear weight");
  const int64_t B = x.dim(0), F = x.dim(1), K = w.dim(0);
  if (w.dim(1) != F) {
    throw std::invalid_argument("linear: input has " + std::to_string(F) + " features, weight expects " +
                                std::to_string(w.dim(1)));
  }
  if (b.defined() && b.numel() != K) throw std::invalid_argument("linear: bias size mismatch");
  std::vector<float> out(static_cast<size_t>(B * K));
  {
    ConstMapMat xm(x.data().data(), B, F);
    ConstMapMat wm(w.data().data(), K, F);
    MapMat om(out.data(), B, K);
    om.noalias() = xm * wm.transpose();
    if (b.defined()) {
      auto bd = b.data();
      for (int64_t i = 0; i < B; ++i)
        for (int64_t k = 0; k < K; ++k) om(i, k) += bd[k];
    }
  }
  const bool rec = detail::needs_graph({&x, &w, &b});
  std::vector<Tensor> inputs{x, w};
  if (b.defined()) inputs.push_back(b);
  return detail::make_result({B, K}, std::move(out), rec, std::move(inputs),
                             [x, w, b, B, F, K](std::span<const float> g) {
                               ConstMapMat gm(g.data(), B, K);
                               if (x.requires_grad()) {
                                 RowMat dx = gm * ConstMapMat(w.data().data(), K, F);
                                 detail::accumulate_grad(x, std::span<const float>(dx.data(), dx.size()));
                               }
                               if (w.requires_grad()) {
                                 RowMat dw = gm.transpose() * ConstMapMat(x.data().data(), B, F);
                                 detail::accumulate_grad(w, std::span<const float>(dw.data(), dw.size()));
                               }
                               if (b.defined() && b.requires_grad()) {
                                 std::vector<float> db(static_cast<size_t>(K), 0.0f);
                                 for (int64_t i = 0; i < B; ++i)
                                   for (int64_t k = 0; k < K; ++k) db[k] += g[i * K + k];
                                 detail::accumulate_grad(b, db);
                               }
                             },
                             "linear");
}

std::vector<float> softmax_rows(std::span<const float> logits, int64_t rows, int64_t cols) {
  std::vector<float> p(logits.begin(), logits.end());
  for (int64_t i = 0; i < rows; ++i) {
    float* r = p.data() + i * cols;
    const float mx = *std::max_element(r, r + cols);
    double s = 0.0;
    for (int64_t k = 0; k < cols; ++k) {
      r[k] = std::exp(r[k] - mx);
      s += r[k];
    }
    for (int64_t k = 0; k < cols; ++k) r[k] = static_cast<float>(r[k] / s);
  }
  return p;
}

std::vector<int> argmax_rows(const Tensor& logits) {
  const int64_t B = logits.dim(0), K = logits.dim(1);
  std::vector<int> out(static_cast<size_t>(B));
  auto d = logits.data();
  for (int64_t i = 0; i < B; ++i) {
    out[i] = static_cast<int>(std::max_element(d.begin() + i * K, d.begin() + (i + 1) * K) - (d.begin() + i * K));
  }
  return out;
}

Tensor cross_entropy(const Tensor& logits, std::span<const int> labels) {
  require_rank(logits, 2, "cross_entropy");
  const int64_t B = logits.dim(0), K = logits.dim(1);
  check_labels(labels, B, K, "cross_entropy");
  auto z = logits.data();
  double total = 0.0;
  for (int64_t i = 0; i < B; ++i) {
    const float* r = z.data() + i * K;
    const float mx = *std::max_element(r, r + K);
    double s = 0.0;
    for (int64_t k = 0; k < K; ++k) s += std::exp(static_cast<double>(r[k] - mx));
    total += std::log(s) + mx - r[labels[i]];
  }
  std::vector<int> ys(labels.begin(), labels.end());
  const bool rec = detail::needs_graph({&logits});
  return detail::make_result({1}, {static_cast<float>(total / static_cast<double>(B))}, rec, {logits},
                             [logits, ys = std::move(ys), B, K](std::span<const float> g) {
                               auto p = softmax_rows(logits.data(), B, K);
                               const float k = g[0] / static_cast<float>(B);
                               for (int64_t i = 0; i < B; ++i) {
                                 p[i * K + ys[i]] -= 1.0f;
                                 for (int64_t c = 0; c < K; ++c) p[i * K + c] *= k;
                               }
                               detail::accumulate_grad(logits, p);
                             },
                             "cross_entropy");
}

Tensor soft_label_bce(const Tensor& logits, const Tensor& targets) {
  require_same_shape(logits, targets, "soft_label_bce");
  auto z = logits.data();
  auto t = targets.data();
  double total = 0.0;
  for (size_t i = 0; i < z.size(); ++i) {
    const double zi = z[i];
    total += std::max(zi, 0.0) - zi * t[i] + std::log1p(std::exp(-std::abs(zi)));
  }
  const double n = static_cast<double>(z.size());
  const bool rec = detail::needs_graph({&logits});
  return detail::make_result({1}, {static_cast<float>(total / n)}, rec, {logits},
                             [logits, targets, n](std::span<const float> g) {
                               auto z = logits.data();
                               auto t = targets.data();
                               std::vector<float> dz(z.size());
                               for (size_t i = 0; i < z.size(); ++i) {
                                 const double s = 1.0 / (1.0 + std::exp(-static_cast<double>(z[i])));
                                 dz[i] = static_cast<float>((s - t[i]) * g[0] / n);
                               }
                               detail::accumulate_grad(logits, dz);
                             },
                             "soft_label_bce");
}

Tensor kl_from_reference(const Tensor& logits, const Tensor& reference_probs) {
  require_same_shape(logits, reference_probs, "kl_from_reference");
  require_rank(logits, 2, "kl_from_reference");
  const int64_t B = logits.dim(0), K = logits.dim(1);
  auto z = logits.data();
  auto p = reference_probs.data();
  double total = 0.0;
  for (int64_t i = 0; i < B; ++i) {
    const float* r = z.data() + i * K;
    const float mx = *std::max_element(r, r + K);
    double s = 0.0;
    for (int64_t k = 0; k < K; ++k) s += std::exp(static_cast<double>(r[k] - mx));
    const double lse = std::log(s) + mx;
    for (int64_t k = 0; k < K; ++k) {
      const double pk = p[i * K + k];
      if (pk > 0.0) total += pk * (std::log(pk) - (r[k] - lse));
    }
  }
  const bool rec = detail::needs_graph({&logits});
  return detail::make_result({1}, {static_cast<float>(total)}, rec, {logits},
                             [logits, reference_probs, B, K](std::span<const float> g) {
                               auto q = softmax_rows(logits.data(), B, K);
                               auto p = reference_probs.data();
                               for (int64_t i = 0; i < B; ++i) {
                                 double ps = 0.0;
                                 for (int64_t k = 0; k < K; ++k) ps += p[i * K + k];
                                 for (int64_t k = 0; k < K; ++k) {
                                   q[i * K + k] = static_cast<float>((ps * q[i * K + k] - p[i * K + k]) * g[0]);
                                 }
                               }
                               detail::accumulate_grad(logits, q);
                             },
                             "kl_from_reference");
}

Tensor margin_loss(const Tensor& logits, std::span<const int> labels, float kappa) {
  require_rank(logits, 2, "margin_loss");
  const int64_t B = logits.dim(0), K = logits.dim(1);
  check_labels(labels, B, K, "margin_loss");
  if (K < 2) throw std::invalid_argument("margin_loss: needs at least two classes");
  auto z = logits.data();
  std::vector<int> runner_up(static_cast<size_t>(B));
  std::vector<char> active(static_cast<size_t>(B));
  double total = 0.0;
  for (int64_t i = 0; i < B; ++i) {
    const float* r = z.data() + i * K;
    int best = -1;
    for (int k = 0; k < K; ++k) {
      if (k == labels[i]) continue;
      if (best < 0 || r[k] > r[best]) best = k;
    }
    runner_up[i] = best;
    const float margin = r[best] - r[labels[i]];
    active[i] = margin > -kappa;
    total += std::max(margin, -kappa);
  }
  std::vector<int> ys(labels.begin(), labels.end());
  const bool rec = detail::needs_graph({&logits});
  return detail::make_result({1}, {static_cast<float>(total)}, rec, {logits},
                             [logits, ys = std::move(ys), runner_up, active, B, K](std::span<const float> g) {
                               std::vector<float> dz(static_cast<size_t>(B * K), 0.0f);
                               for (int64_t i = 0; i < B; ++i) {
                                 if (!active[i]) continue;
                                 dz[i * K + runner_up[i]] += g[0];
                                 dz[i * K + ys[i]] -= g[0];
                               }
                               detail::accumulate_grad(logits, dz);
                             },
                             "margin_loss");
}

}  // namespace freqlens::ops
