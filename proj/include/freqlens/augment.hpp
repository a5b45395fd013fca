#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "freqlens/dataio.hpp"

namespace freqlens {

/// A- modes augment adversarial examples after generation; C- modes augment
/// clean data before generation.
enum class AugMode { None, AMixup, CMixup, ACutout, CCutout, ACutmix, CCutmix };

std::string to_string(AugMode mode);
AugMode aug_mode_from_string(const std::string& name);
bool is_clean_mode(AugMode mode);
bool mixes_labels(AugMode mode);

/// Draws a mix coefficient or an area fraction in [0,1].
using FractionSource = std::function<double(std::mt19937_64&)>;

/// Beta(a, b) via two gamma draws.
FractionSource beta_source(double a, double b);
FractionSource constant_source(double value);

struct PatchBox {
  int64_t h0 = 0;
  int64_t w0 = 0;
  int64_t dh = 0;
  int64_t dw = 0;
};

/// Augmented batch. Example k carries the soft label
///   lambda[k] * onehot(label_a[k]) + (1 - lambda[k]) * onehot(label_b[k]).
struct MixedBatch {
  Tensor images;
  std::vector<int> label_a;
  std::vector<int> label_b;
  std::vector<float> lambda;
  std::vector<PatchBox> boxes;  // one per example for cutout/cutmix

  int64_t size() const { return static_cast<int64_t>(label_a.size()); }
  /// B×K soft label matrix; rows sum to 1.
  Tensor soft_labels(int num_classes) const;
  /// label_a where lambda >= 0.5, else label_b.
  std::vector<int> dominant_labels() const;
};

/// Shuffles the batch and pairs consecutive entries; every example is in
/// exactly one pair (a trailing odd example stays unpaired). Returns the
/// pairs as positions in the batch.
std::vector<std::pair<int64_t, int64_t>> pair_batch(int64_t batch_size, std::mt19937_64& rng);

MixedBatch mixup(const ImageBatch& batch, const FractionSource& lambda_source, std::mt19937_64& rng);
MixedBatch cutout(const ImageBatch& batch, const FractionSource& area_source, std::mt19937_64& rng);
MixedBatch cutmix(const ImageBatch& batch, const FractionSource& area_source, std::mt19937_64& rng);

/// Square-ish patch covering about `fraction` of an h×w image, uniformly
/// placed inside the bounds.
PatchBox sample_patch(double fraction, int64_t h, int64_t w, std::mt19937_64& rng);

MixedBatch apply_augmentation(AugMode mode, const ImageBatch& batch, const FractionSource& source,
                              std::mt19937_64& rng);

/// Random crop with zero padding of `pad` pixels, then horizontal flip with
/// probability 1/2 when `flip` is set.
ImageBatch crop_flip(const ImageBatch& batch, int pad, bool flip, std::mt19937_64& rng);

}  // namespace freqlens
