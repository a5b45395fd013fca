#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "freqlens/tensor.hpp"

namespace freqlens {

/// Images B×C×H×W in [0,1] plus integer labels.
struct ImageBatch {
  Tensor images;
  std::vector<int> labels;
  std::vector<int64_t> indices;  // positions in the source split

  int64_t size() const { return static_cast<int64_t>(labels.size()); }
};

/// Contiguous storage of one split.
struct Split {
  int64_t channels = 3;
  int64_t height = 32;
  int64_t width = 32;
  std::vector<float> pixels;  // N×C×H×W
  std::vector<int> labels;

  int64_t size() const { return static_cast<int64_t>(labels.size()); }
  int64_t image_numel() const { return channels * height * width; }
  std::span<const float> image(int64_t i) const {
    return std::span<const float>(pixels).subspan(static_cast<size_t>(i * image_numel()),
                                                  static_cast<size_t>(image_numel()));
  }
  /// First `n` examples (or all when fewer).
  Split head(int64_t n) const;
};

struct Dataset {
  Split train;
  Split test;
  int num_classes = 10;
  std::string provenance;
  bool disjoint = true;
};

/// Record geometry of the binary format: one label byte followed by
/// channel planes of row-major bytes.
struct RecordGeometry {
  int64_t channels = 3;
  int64_t height = 32;
  int64_t width = 32;
  int max_label = 9;
  int64_t record_bytes() const { return 1 + channels * height * width; }
};

/// Reads and concatenates CIFAR-10 binary batch files. Pixels map to [0,1]
/// by /255 with no further normalization.
Split load_cifar10_bin(const std::vector<std::filesystem::path>& paths, const RecordGeometry& geom = {});

/// Loads data_batch_1..5.bin and test_batch.bin from `dir`.
Dataset load_cifar10_dir(const std::filesystem::path& dir);

/// Writes `split` in the binary record format (pixels rounded to bytes).
void write_cifar10_bin(const Split& split, const std::filesystem::path& path);

/// Class-conditional synthetic images with known frequency structure:
///   0.5 + lf_amplitude * base[class] + nuisance_amplitude * lf_random
///       + hf_amplitude * grating(random orientation, random phase) + noise
/// Only the low-frequency base carries the class; the high-frequency texture
/// is per-example.
/// Patterns are zero-mean and unit-RMS and shared across channels; noise is
/// i.i.d. per channel. Values are clamped to [0,1].
struct SynthConfig {
  uint64_t seed = 0;
  int n_per_class = 100;
  int test_per_class = 50;
  int classes = 2;
  int size = 16;
  int channels = 3;
  float lf_amplitude = 0.06f;
  float nuisance_amplitude = 0.06f;
  float hf_amplitude = 0.03f;
  float noise_sigma = 0.06f;
};

Dataset synth_dataset(const SynthConfig& cfg);

/// Unit-RMS, zero-mean low-frequency base pattern of a synthetic class (H×W).
std::vector<float> synth_class_pattern(const SynthConfig& cfg, int cls);

/// Batch index lists for one epoch. shuffle=false keeps storage order; the
/// last partial batch is kept.
std::vector<std::vector<int64_t>> batch_indices(int64_t n, int64_t batch_size, bool shuffle, uint64_t seed);

ImageBatch make_batch(const Split& split, std::span<const int64_t> indices);

/// Single-consumer batch iterator over a split.
class BatchIterator {
 public:
  BatchIterator(const Split& split, int64_t batch_size, bool shuffle, uint64_t seed);
  std::optional<ImageBatch> next();
  size_t batch_count() const { return order_.size(); }

 private:
  const Split& split_;
  std::vector<std::vector<int64_t>> order_;
  size_t pos_ = 0;
};

/// The fixed probe batch: the first unshuffled batch.
ImageBatch probe_batch(const Split& split, int64_t batch_size);

}  // namespace freqlens
