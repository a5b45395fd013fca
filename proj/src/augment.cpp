#include "freqlens/augment.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace freqlens {

std::string to_string(AugMode mode) {
  switch (mode) {
    case AugMode::None: return "none";
    case AugMode::AMixup: return "A-mixup";
    case AugMode::CMixup: return "C-mixup";
    case AugMode::ACutout: return "A-cutout";
    case AugMode::CCutout: return "C-cutout";
    case AugMode::ACutmix: return "A-cutmix";
    case AugMode::CCutmix: return "C-cutmix";
  }
  return "?";
}

AugMode aug_mode_from_string(const std::string& name) {
  for (auto m : {AugMode::None, AugMode::AMixup, AugMode::CMixup, AugMode::ACutout, AugMode::CCutout, AugMode::ACutmix,
                 AugMode::CCutmix}) {
    if (to_string(m) == name) return m;
  }
  throw std::invalid_argument("unknown augmentation '" + name + "'");
}

bool is_clean_mode(AugMode mode) {
  return mode == AugMode::CMixup || mode == AugMode::CCutout || mode == AugMode::CCutmix;
}

bool mixes_labels(AugMode mode) {
  return mode == AugMode::AMixup || mode == AugMode::CMixup || mode == AugMode::ACutmix || mode == AugMode::CCutmix;
}

FractionSource beta_source(double a, double b) {
  if (!(a > 0.0 && b > 0.0)) throw std::invalid_argument("beta parameters must be positive");
  return [a, b](std::mt19937_64& rng) {
    std::gamma_distribution<double> ga(a, 1.0), gb(b, 1.0);
    const double x = ga(rng), y = gb(rng);
    return x + y > 0.0 ? x / (x + y) : 0.5;
  };
}

FractionSource constant_source(double value) {
  if (!(value >= 0.0 && value <= 1.0)) throw std::invalid_argument("fraction must lie in [0,1]");
  return [value](std::mt19937_64&) { return value; };
}

Tensor MixedBatch::soft_labels(int num_classes) const {
  std::vector<float> t(static_cast<size_t>(size() * num_classes), 0.0f);
  for (int64_t k = 0; k < size(); ++k) {
    t[k * num_classes + label_a[k]] += lambda[k];
    t[k * num_classes + label_b[k]] += 1.0f - lambda[k];
  }
  return Tensor::from({size(), num_classes}, std::move(t));
}

std::vector<int> MixedBatch::dominant_labels() const {
  std::vector<int> out(label_a.size());
  for (size_t k = 0; k < out.size(); ++k) out[k] = lambda[k] >= 0.5f ? label_a[k] : label_b[k];
  return out;
}

std::vector<std::pair<int64_t, int64_t>> pair_batch(int64_t batch_size, std::mt19937_64& rng) {
  std::vector<int64_t> order(static_cast<size_t>(batch_size));
  for (int64_t i = 0; i < batch_size; ++i) order[i] = i;
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::pair<int64_t, int64_t>> pairs;
  for (int64_t i = 0; i + 1 < batch_size; i += 2) pairs.emplace_back(order[i], order[i + 1]);
  return pairs;
}

namespace {

MixedBatch identity_mix(const ImageBatch& batch) {
  MixedBatch m;
  m.images = batch.images.detach();
  m.label_a = batch.labels;
  m.label_b = batch.labels;
  m.lambda.assign(batch.labels.size(), 1.0f);
  m.boxes.assign(batch.labels.size(), PatchBox{});
  return m;
}

}  // namespace

MixedBatch mixup(const ImageBatch& batch, const FractionSource& lambda_source, std::mt19937_64& rng) {
  MixedBatch m = identity_mix(batch);
  const int64_t per = batch.images.numel() / std::max<int64_t>(batch.size(), 1);
  auto src = batch.images.data();
  auto dst = m.images.data();
  for (auto [i, j] : pair_batch(batch.size(), rng)) {
    const float lam = static_cast<float>(lambda_source(rng));
    for (int64_t k = 0; k < per; ++k) {
      const float xi = src[i * per + k], xj = src[j * per + k];
      dst[i * per + k] = lam * xi + (1.0f - lam) * xj;
      dst[j * per + k] = lam * xj + (1.0f - lam) * xi;
    }
    m.lambda[i] = m.lambda[j] = lam;
    m.label_b[i] = batch.labels[j];
    m.label_b[j] = batch.labels[i];
  }
  return m;
}

PatchBox sample_patch(double fraction, int64_t h, int64_t w, std::mt19937_64& rng) {
  fraction = std::clamp(fraction, 0.0, 1.0);
  PatchBox box;
  const double side = std::sqrt(fraction);
  box.dh = std::clamp<int64_t>(std::llround(side * static_cast<double>(h)), 0, h);
  box.dw = std::clamp<int64_t>(std::llround(side * static_cast<double>(w)), 0, w);
  std::uniform_int_distribution<int64_t> rows(0, h - box.dh), cols(0, w - box.dw);
  box.h0 = rows(rng);
  box.w0 = cols(rng);
  return box;
}

MixedBatch cutout(const ImageBatch& batch, const FractionSource& area_source, std::mt19937_64& rng) {
  MixedBatch m = identity_mix(batch);
  const int64_t C = batch.images.dim(1), H = batch.images.dim(2), W = batch.images.dim(3);
  auto dst = m.images.data();
  for (int64_t b = 0; b < batch.size(); ++b) {
    const PatchBox box = sample_patch(area_source(rng), H, W, rng);
    m.boxes[b] = box;
    for (int64_t c = 0; c < C; ++c)
      for (int64_t i = box.h0; i < box.h0 + box.dh; ++i)
        for (int64_t j = box.w0; j < box.w0 + box.dw; ++j) dst[((b * C + c) * H + i) * W + j] = 0.0f;
  }
  return m;
}

MixedBatch cutmix(const ImageBatch& batch, const FractionSource& area_source, std::mt19937_64& rng) {
  MixedBatch m = identity_mix(batch);
  const int64_t C = batch.images.dim(1), H = batch.images.dim(2), W = batch.images.dim(3);
  auto src = batch.images.data();
  auto dst = m.images.data();
  for (auto [a, b] : pair_batch(batch.size(), rng)) {
    const PatchBox box = sample_patch(area_source(rng), H, W, rng);
    const float lam = 1.0f - static_cast<float>(box.dh * box.dw) / static_cast<float>(H * W);
    for (int64_t c = 0; c < C; ++c)
      for (int64_t i = box.h0; i < box.h0 + box.dh; ++i)
        for (int64_t j = box.w0; j < box.w0 + box.dw; ++j) {
          dst[((a * C + c) * H + i) * W + j] = src[((b * C + c) * H + i) * W + j];
          dst[((b * C + c) * H + i) * W + j] = src[((a * C + c) * H + i) * W + j];
        }
    m.boxes[a] = m.boxes[b] = box;
    m.lambda[a] = m.lambda[b] = lam;
    m.label_b[a] = batch.labels[b];
    m.label_b[b] = batch.labels[a];
  }
  return m;
}

MixedBatch apply_augmentation(AugMode mode, const ImageBatch& batch, const FractionSource& source,
                              std::mt19937_64& rng) {
  switch (mode) {
    case AugMode::None: return identity_mix(batch);
    case AugMode::AMixup:
    case AugMode::CMixup: return mixup(batch, source, rng);
    case AugMode::ACutout:
    case AugMode::CCutout: return cutout(batch, source, rng);
    case AugMode::ACutmix:
    case AugMode::CCutmix: return cutmix(batch, source, rng);
  }
  throw std::logic_error("unhandled augmentation mode");
}

ImageBatch crop_flip(const ImageBatch& batch, int pad, bool flip, std::mt19937_64& rng) {
  if (pad < 0) throw std::invalid_argument("crop padding must be >= 0");
  ImageBatch out = batch;
  if (pad == 0 && !flip) {
    out.images = batch.images.detach();
    return out;
  }
  const int64_t B = batch.images.dim(0), C = batch.images.dim(1), H = batch.images.dim(2), W = batch.images.dim(3);
  std::vector<float> px(static_cast<size_t>(batch.images.numel()), 0.0f);
  auto src = batch.images.data();
  std::uniform_int_distribution<int> shift(-pad, pad);
  std::bernoulli_distribution coin(0.5);
  for (int64_t b = 0; b < B; ++b) {
    const int dy = shift(rng), dx = shift(rng);
    const bool mirror = flip && coin(rng);
    for (int64_t c = 0; c < C; ++c)
      for (int64_t i = 0; i < H; ++i)
        for (int64_t j = 0; j < W; ++j) {
          const int64_t si = i + dy;
          const int64_t sj = (mirror ? W - 1 - j : j) + dx;
          if (si < 0 || si >= H || sj < 0 || sj >= W) continue;
          px[((b * C + c) * H + i) * W + j] = src[((b * C + c) * H + si) * W + sj];
        }
  }
  out.images = Tensor::from(batch.images.shape(), std::move(px));
  return out;
}

}  // namespace freqlens
