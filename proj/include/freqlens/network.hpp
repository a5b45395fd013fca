#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "freqlens/ops.hpp"
#include "freqlens/tensor.hpp"

namespace freqlens {

enum class LayerKind { Conv2d, BatchNorm2d, HardTanh, ReLU, Residual, GlobalAvgPool, Linear };

std::string to_string(LayerKind kind);
LayerKind layer_kind_from_string(const std::string& name);

/// Static description of one layer. For conv2d and linear, in/out are
/// channels or features; for batchnorm, out_channels is the channel count.
/// A residual layer runs `body` and adds a parameter-free shortcut
/// (subsample + zero channel padding), followed by a relu.
struct LayerSpec {
  LayerKind kind = LayerKind::ReLU;
  int64_t in_channels = 0;
  int64_t out_channels = 0;
  int kernel = 0;
  int stride = 1;
  int pad = 0;
  bool bias = false;
  int quant_bits = 32;
  bool fat = false;
  std::vector<LayerSpec> body;

  static LayerSpec conv(int64_t in, int64_t out, int kernel, int stride, int pad);
  static LayerSpec batch_norm(int64_t channels);
  static LayerSpec activation(LayerKind kind);
  static LayerSpec residual(std::vector<LayerSpec> body, int stride, int64_t in, int64_t out);
  static LayerSpec pool();
  static LayerSpec dense(int64_t in, int64_t out, bool bias = true);
};

struct Layer {
  LayerSpec spec;
  Tensor weight;  // conv/linear weight, batchnorm gamma
  Tensor bias;    // linear bias, batchnorm beta
  ops::BatchNormState bn;
  Tensor fat_logits;
  std::vector<Layer> body;
};

struct NamedTensor {
  std::string name;
  Tensor tensor;
  bool trainable = true;
};

/// Outputs captured per weighted layer during a forward pass. Post-activation
/// taps record the output of the activation that follows each conv (the block
/// output for the second conv of a residual block); the linear head records
/// its logits.
struct ActivationTrace {
  bool pre_activation = false;
  std::vector<std::string> names;
  std::vector<Tensor> taps;
};

struct ResNetArgs {
  int depth_blocks = 3;
  int width = 1;
  int num_classes = 10;
  int quant_bits = 32;
  bool fat = false;
  int in_channels = 3;
  int image_size = 32;
};

/// Initial value of FAT mask logits (sigmoid(3) ~ 0.95, near-identity mask).
inline constexpr float kFatLogitInit = 3.0f;

class Network {
 public:
  /// Validates the layer stack against the input shape (C, H, W) and
  /// initializes parameters from `seed`.
  Network(std::vector<LayerSpec> specs, int64_t in_channels, int64_t height, int64_t width, uint64_t seed);

  Network(Network&&) = default;
  Network& operator=(Network&&) = default;
  Network(const Network&) = delete;
  Network& operator=(const Network&) = delete;

  /// Deep copy with independent parameter storage.
  Network clone() const;

  Tensor forward(const Tensor& x, ActivationTrace* trace = nullptr);

  void train(bool flag) { training_ = flag; }
  bool training() const { return training_; }

  std::vector<Tensor> parameters() const;
  /// Parameters and batchnorm buffers in declaration order.
  std::vector<NamedTensor> state() const;
  void set_requires_grad(bool flag);
  void zero_grad();

  const std::vector<Layer>& layers() const { return layers_; }
  std::vector<Layer>& layers() { return layers_; }
  std::vector<LayerSpec> specs() const;
  int64_t in_channels() const { return in_channels_; }
  int64_t height() const { return height_; }
  int64_t width() const { return width_; }
  int64_t num_classes() const { return num_classes_; }
  int weighted_layer_count() const;
  int64_t parameter_count() const;

  /// Weight of the first convolution (the stem).
  Tensor stem_weight() const;
  /// Every conv weight in declaration order.
  std::vector<Tensor> conv_weights() const;

 private:
  Network() = default;
  std::vector<Layer> layers_;
  int64_t in_channels_ = 0, height_ = 0, width_ = 0, num_classes_ = 0;
  bool training_ = true;
};

/// Stem conv (3 -> 16*width) + bn + hardtanh, three stages of `depth_blocks`
/// basic blocks (16, 32, 64 times width, stride 2 between stages), global
/// average pool and a linear head. All weighted layers except the stem take
/// `quant_bits`; conv layers except the stem take `fat`.
Network build_resnet(const ResNetArgs& args, uint64_t seed);
std::vector<LayerSpec> resnet_specs(const ResNetArgs& args);

/// RAII: disables requires_grad on all parameters for the guard's lifetime.
class FrozenParams {
 public:
  explicit FrozenParams(Network& net);
  ~FrozenParams();
  FrozenParams(const FrozenParams&) = delete;
  FrozenParams& operator=(const FrozenParams&) = delete;

 private:
  std::vector<Tensor> params_;
  std::vector<bool> flags_;
};

/// RAII: sets train/eval mode, restoring the previous mode on exit.
class ModeGuard {
 public:
  ModeGuard(Network& net, bool training) : net_(net), prev_(net.training()) { net.train(training); }
  ~ModeGuard() { net_.train(prev_); }
  ModeGuard(const ModeGuard&) = delete;
  ModeGuard& operator=(const ModeGuard&) = delete;

 private:
  Network& net_;
  bool prev_;
};

}  // namespace freqlens
