#include "freqlens/dataio.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <stdexcept>

#include "freqlens/log.hpp"

namespace freqlens {

Split Split::head(int64_t n) const {
  Split s;
  s.channels = channels;
  s.height = height;
  s.width = width;
  n = std::min(n, size());
  s.labels.assign(labels.begin(), labels.begin() + n);
  s.pixels.assign(pixels.begin(), pixels.begin() + n * image_numel());
  return s;
}

Split load_cifar10_bin(const std::vector<std::filesystem::path>& paths, const RecordGeometry& geom) {
  Split split;
  split.channels = geom.channels;
  split.height = geom.height;
  split.width = geom.width;
  const int64_t rec = geom.record_bytes();
  for (const auto& path : paths) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (bytes.empty()) {
      log::warn("empty dataset file " + path.string());
      continue;
    }
    const auto len = static_cast<int64_t>(bytes.size());
    if (len % rec != 0) {
      throw std::runtime_error(path.string() + ": length " + std::to_string(len) + " is not a multiple of " +
                               std::to_string(rec) + "; trailing partial record at byte offset " +
                               std::to_string(len - len % rec));
    }
    const int64_t n = len / rec;
    const size_t base = split.pixels.size();
    split.pixels.resize(base + static_cast<size_t>(n * (rec - 1)));
    for (int64_t r = 0; r < n; ++r) {
      const unsigned char* p = bytes.data() + r * rec;
      if (p[0] > geom.max_label) {
        throw std::runtime_error(path.string() + ": label " + std::to_string(p[0]) + " out of range at byte offset " +
                                 std::to_string(r * rec));
      }
      split.labels.push_back(p[0]);
      float* dst = split.pixels.data() + base + r * (rec - 1);
      for (int64_t k = 1; k < rec; ++k) dst[k - 1] = static_cast<float>(p[k]) / 255.0f;
    }
  }
  return split;
}

Dataset load_cifar10_dir(const std::filesystem::path& dir) {
  Dataset ds;
  std::vector<std::filesystem::path> train;
  for (int i = 1; i <= 5; ++i) train.push_back(dir / ("data_batch_" + std::to_string(i) + ".bin"));
  ds.train = load_cifar10_bin(train);
  ds.test = load_cifar10_bin({dir / "test_batch.bin"});
  ds.num_classes = 10;
  ds.provenance = "cifar10:" + dir.string();
  return ds;
}

void write_cifar10_bin(const Split& split, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  const int64_t per = split.image_numel();
  std::vector<unsigned char> rec(static_cast<size_t>(per + 1));
  for (int64_t i = 0; i < split.size(); ++i) {
    if (split.labels[i] < 0 || split.labels[i] > 255) throw std::invalid_argument("label does not fit in a byte");
    rec[0] = static_cast<unsigned char>(split.labels[i]);
    auto img = split.image(i);
    for (int64_t k = 0; k < per; ++k) {
      rec[k + 1] = static_cast<unsigned char>(std::lround(std::clamp(img[k], 0.0f, 1.0f) * 255.0f));
    }
    out.write(reinterpret_cast<const char*>(rec.data()), static_cast<std::streamsize>(rec.size()));
  }
}

namespace {

// Zero-mean, unit-RMS normalization of an H×W pattern.
void normalize(std::vector<double>& p) {
  double mean = 0.0;
  for (double v : p) mean += v;
  mean /= static_cast<double>(p.size());
  double ss = 0.0;
  for (auto& v : p) {
    v -= mean;
    ss += v * v;
  }
  const double rms = std::sqrt(ss / static_cast<double>(p.size()));
  if (rms > 0.0) {
    for (auto& v : p) v /= rms;
  }
}

std::vector<double> random_low_freq(int size, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> freq(-2, 2);
  std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
  std::normal_distribution<double> weight(0.0, 1.0);
  std::vector<double> p(static_cast<size_t>(size * size), 0.0);
  for (int t = 0; t < 3; ++t) {
    int u = 0, v = 0;
    while (u == 0 && v == 0) {
      u = freq(rng);
      v = freq(rng);
    }
    const double w = weight(rng), ph = phase(rng);
    for (int i = 0; i < size; ++i)
      for (int j = 0; j < size; ++j)
        p[i * size + j] += w * std::cos(2.0 * std::numbers::pi * (u * i + v * j) / size + ph);
  }
  normalize(p);
  return p;
}

std::vector<double> grating(int size, double theta, double phase) {
  const double radius = 3.0 * size / 8.0;
  const int u = static_cast<int>(std::lround(radius * std::cos(theta)));
  const int v = static_cast<int>(std::lround(radius * std::sin(theta)));
  std::vector<double> p(static_cast<size_t>(size * size));
  for (int i = 0; i < size; ++i)
    for (int j = 0; j < size; ++j) p[i * size + j] = std::cos(2.0 * std::numbers::pi * (u * i + v * j) / size + phase);
  normalize(p);
  return p;
}

std::vector<double> class_pattern(const SynthConfig& cfg, int cls) {
  std::mt19937_64 rng(cfg.seed * 1000003ULL + static_cast<uint64_t>(cls) * 7919ULL + 17ULL);
  return random_low_freq(cfg.size, rng);
}

Split generate(const SynthConfig& cfg, int per_class, uint64_t stream) {
  Split s;
  s.channels = cfg.channels;
  s.height = s.width = cfg.size;
  const int64_t plane = static_cast<int64_t>(cfg.size) * cfg.size;
  std::vector<std::vector<double>> bases;
  for (int c = 0; c < cfg.classes; ++c) bases.push_back(class_pattern(cfg, c));
  std::mt19937_64 rng(cfg.seed ^ (0x9E3779B97F4A7C15ULL * (stream + 1)));
  std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
  std::normal_distribution<double> noise(0.0, cfg.noise_sigma);
  const int64_t total = static_cast<int64_t>(per_class) * cfg.classes;
  s.pixels.resize(static_cast<size_t>(total * cfg.channels * plane));
  s.labels.resize(static_cast<size_t>(total));
  // Interleave classes so that every prefix is roughly balanced.
  for (int64_t n = 0; n < total; ++n) {
    const int cls = static_cast<int>(n % cfg.classes);
    s.labels[n] = cls;
    auto nuisance = random_low_freq(cfg.size, rng);
    const double theta = 0.5 * phase(rng);
    auto texture = grating(cfg.size, theta, phase(rng));
    for (int ch = 0; ch < cfg.channels; ++ch) {
      float* dst = s.pixels.data() + (n * cfg.channels + ch) * plane;
      for (int64_t k = 0; k < plane; ++k) {
        const double v = 0.5 + cfg.lf_amplitude * bases[cls][k] + cfg.nuisance_amplitude * nuisance[k] +
                         cfg.hf_amplitude * texture[k] + noise(rng);
        dst[k] = static_cast<float>(std::clamp(v, 0.0, 1.0));
      }
    }
  }
  return s;
}

}  // namespace

std::vector<float> synth_class_pattern(const SynthConfig& cfg, int cls) {
  auto p = class_pattern(cfg, cls);
  return {p.begin(), p.end()};
}

Dataset synth_dataset(const SynthConfig& cfg) {
  if (cfg.classes < 2) throw std::invalid_argument("synthetic dataset needs at least two classes");
  if (cfg.size < 4 || cfg.channels < 1 || cfg.n_per_class < 0 || cfg.test_per_class < 0) {
    throw std::invalid_argument("invalid synthetic dataset geometry");
  }
  Dataset ds;
  ds.train = generate(cfg, cfg.n_per_class, 0);
  ds.test = generate(cfg, cfg.test_per_class, 1);
  ds.num_classes = cfg.classes;
  ds.provenance = "synth:seed=" + std::to_string(cfg.seed);
  return ds;
}

std::vector<std::vector<int64_t>> batch_indices(int64_t n, int64_t batch_size, bool shuffle, uint64_t seed) {
  if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  std::vector<int64_t> order(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) order[i] = i;
  if (shuffle) {
    std::mt19937_64 rng(seed);
    std::shuffle(order.begin(), order.end(), rng);
  }
  std::vector<std::vector<int64_t>> out;
  for (int64_t start = 0; start < n; start += batch_size) {
    out.emplace_back(order.begin() + start, order.begin() + std::min(n, start + batch_size));
  }
  return out;
}

ImageBatch make_batch(const Split& split, std::span<const int64_t> indices) {
  ImageBatch b;
  const int64_t per = split.image_numel();
  std::vector<float> px(static_cast<size_t>(static_cast<int64_t>(indices.size()) * per));
  for (size_t i = 0; i < indices.size(); ++i) {
    auto img = split.image(indices[i]);
    std::copy(img.begin(), img.end(), px.begin() + static_cast<int64_t>(i) * per);
    b.labels.push_back(split.labels[indices[i]]);
  }
  b.indices.assign(indices.begin(), indices.end());
  b.images = Tensor::from({static_cast<int64_t>(indices.size()), split.channels, split.height, split.width},
                          std::move(px));
  return b;
}

BatchIterator::BatchIterator(const Split& split, int64_t batch_size, bool shuffle, uint64_t seed)
    : split_(split), order_(batch_indices(split.size(), batch_size, shuffle, seed)) {}

std::optional<ImageBatch> BatchIterator::next() {
  if (pos_ >= order_.size()) return std::nullopt;
  return make_batch(split_, order_[pos_++]);
}

ImageBatch probe_batch(const Split& split, int64_t batch_size) {
  auto order = batch_indices(split.size(), batch_size, false, 0);
  if (order.empty()) throw std::invalid_argument("probe batch of an empty split");
  return make_batch(split, order.front());
}

}  // namespace freqlens
