#include "freqlens/network.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

#include "freqlens/quant.hpp"

namespace freqlens {

std::string to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::Conv2d: return "conv2d";
    case LayerKind::BatchNorm2d: return "batchnorm";
    case LayerKind::HardTanh: return "hardtanh";
    case LayerKind::ReLU: return "relu";
    case LayerKind::Residual: return "residual";
    case LayerKind::GlobalAvgPool: return "avgpool";
    case LayerKind::Linear: return "linear";
  }
  return "unknown";
}

LayerKind layer_kind_from_string(const std::string& name) {
  for (auto k : {LayerKind::Conv2d, LayerKind::BatchNorm2d, LayerKind::HardTanh, LayerKind::ReLU,
                 LayerKind::Residual, LayerKind::GlobalAvgPool, LayerKind::Linear}) {
    if (to_string(k) == name) return k;
  }
  throw std::invalid_argument("unknown layer kind '" + name + "'");
}

LayerSpec LayerSpec::conv(int64_t in, int64_t out, int kernel, int stride, int pad) {
  LayerSpec s;
  s.kind = LayerKind::Conv2d;
  s.in_channels = in;
  s.out_channels = out;
  s.kernel = kernel;
  s.stride = stride;
  s.pad = pad;
  return s;
}

LayerSpec LayerSpec::batch_norm(int64_t channels) {
  LayerSpec s;
  s.kind = LayerKind::BatchNorm2d;
  s.in_channels = s.out_channels = channels;
  return s;
}

LayerSpec LayerSpec::activation(LayerKind kind) {
  LayerSpec s;
  s.kind = kind;
  return s;
}

LayerSpec LayerSpec::residual(std::vector<LayerSpec> body, int stride, int64_t in, int64_t out) {
  LayerSpec s;
  s.kind = LayerKind::Residual;
  s.body = std::move(body);
  s.stride = stride;
  s.in_channels = in;
  s.out_channels = out;
  return s;
}

LayerSpec LayerSpec::pool() {
  LayerSpec s;
  s.kind = LayerKind::GlobalAvgPool;
  return s;
}

LayerSpec LayerSpec::dense(int64_t in, int64_t out, bool bias) {
  LayerSpec s;
  s.kind = LayerKind::Linear;
  s.in_channels = in;
  s.out_channels = out;
  s.bias = bias;
  return s;
}

namespace {

struct ShapeState {
  Shape dims;  // {C, H, W} or {F}
};

[[noreturn]] void layer_error(const std::string& path, const LayerSpec& spec, const std::string& what) {
  throw std::invalid_argument("layer " + path + " (" + to_string(spec.kind) + "): " + what);
}

void validate(const std::vector<LayerSpec>& specs, ShapeState& st, const std::string& prefix, bool& seen_conv) {
  for (size_t i = 0; i < specs.size(); ++i) {
    const auto& s = specs[i];
    const std::string path = prefix + std::to_string(i);
    const bool spatial = st.dims.size() == 3;
    switch (s.kind) {
      case LayerKind::Conv2d: {
        if (!spatial) layer_error(path, s, "expects a spatial input");
        if (st.dims[0] != s.in_channels) {
          layer_error(path, s, "expects " + std::to_string(s.in_channels) + " input channels, got " +
                                   std::to_string(st.dims[0]));
        }
        if (s.kernel < 1 || s.stride < 1 || s.pad < 0 || s.out_channels < 1) layer_error(path, s, "invalid geometry");
        if (!valid_quant_bits(s.quant_bits)) layer_error(path, s, "invalid quantization bits");
        if (!seen_conv && (s.quant_bits != 32 || s.fat)) {
          layer_error(path, s, "the first convolution cannot be quantized or FAT-masked");
        }
        seen_conv = true;
        const int64_t h = (st.dims[1] + 2 * s.pad - s.kernel) / s.stride + 1;
        const int64_t w = (st.dims[2] + 2 * s.pad - s.kernel) / s.stride + 1;
        if (h < 1 || w < 1) layer_error(path, s, "kernel larger than padded input");
        st.dims = {s.out_channels, h, w};
        break;
      }
      case LayerKind::BatchNorm2d:
        if (!spatial || st.dims[0] != s.out_channels) layer_error(path, s, "channel count mismatch");
        break;
      case LayerKind::HardTanh:
      case LayerKind::ReLU:
        break;
      case LayerKind::Residual: {
        if (!spatial || st.dims[0] != s.in_channels) layer_error(path, s, "input channel mismatch");
        if (s.out_channels < s.in_channels || s.stride < 1) layer_error(path, s, "invalid shortcut");
        ShapeState inner = st;
        validate(s.body, inner, path + ".body.", seen_conv);
        const Shape expect = {s.out_channels, (st.dims[1] + s.stride - 1) / s.stride,
                              (st.dims[2] + s.stride - 1) / s.stride};
        if (inner.dims != expect) {
          layer_error(path, s, "body output " + shape_str(inner.dims) + " does not match shortcut " + shape_str(expect));
        }
        st.dims = expect;
        break;
      }
      case LayerKind::GlobalAvgPool:
        if (!spatial) layer_error(path, s, "expects a spatial input");
        st.dims = {st.dims[0]};
        break;
      case LayerKind::Linear: {
        const int64_t features = shape_numel(st.dims);
        if (features != s.in_channels) {
          layer_error(path, s, "expects " + std::to_string(s.in_channels) + " features, got " +
                                   std::to_string(features));
        }
        if (!valid_quant_bits(s.quant_bits)) layer_error(path, s, "invalid quantization bits");
        if (s.fat) layer_error(path, s, "FAT applies to convolutions only");
        st.dims = {s.out_channels};
        break;
      }
    }
  }
}

Layer init_layer(const LayerSpec& s, std::mt19937_64& rng) {
  Layer l;
  l.spec = s;
  switch (s.kind) {
    case LayerKind::Conv2d: {
      const int64_t fan_in = s.in_channels * s.kernel * s.kernel;
      std::normal_distribution<float> dist(0.0f, std::sqrt(2.0f / static_cast<float>(fan_in)));
      std::vector<float> w(static_cast<size_t>(s.out_channels * fan_in));
      for (auto& v : w) v = dist(rng);
      l.weight = Tensor::from({s.out_channels, s.in_channels, s.kernel, s.kernel}, std::move(w), true);
      if (s.fat) l.fat_logits = Tensor::full({fan_in}, kFatLogitInit, true);
      break;
    }
    case LayerKind::BatchNorm2d:
      l.weight = Tensor::full({s.out_channels}, 1.0f, true);
      l.bias = Tensor::zeros({s.out_channels}, true);
      l.bn.running_mean = Tensor::zeros({s.out_channels});
      l.bn.running_var = Tensor::full({s.out_channels}, 1.0f);
      break;
    case LayerKind::Linear: {
      const float bound = 1.0f / std::sqrt(static_cast<float>(s.in_channels));
      std::uniform_real_distribution<float> dist(-bound, bound);
      std::vector<float> w(static_cast<size_t>(s.out_channels * s.in_channels));
      for (auto& v : w) v = dist(rng);
      l.weight = Tensor::from({s.out_channels, s.in_channels}, std::move(w), true);
      if (s.bias) {
        std::vector<float> b(static_cast<size_t>(s.out_channels));
        for (auto& v : b) v = dist(rng);
        l.bias = Tensor::from({s.out_channels}, std::move(b), true);
      }
      break;
    }
    case LayerKind::Residual:
      for (const auto& child : s.body) l.body.push_back(init_layer(child, rng));
      break;
    default:
      break;
  }
  return l;
}

Tensor copy_of(const Tensor& t) { return t.defined() ? t.clone() : Tensor(); }

Layer deep_copy(const Layer& src) {
  Layer l;
  l.spec = src.spec;
  l.weight = copy_of(src.weight);
  l.bias = copy_of(src.bias);
  l.bn = src.bn;
  l.bn.running_mean = copy_of(src.bn.running_mean);
  l.bn.running_var = copy_of(src.bn.running_var);
  l.fat_logits = copy_of(src.fat_logits);
  for (const auto& child : src.body) l.body.push_back(deep_copy(child));
  return l;
}

void collect_state(const std::vector<Layer>& layers, const std::string& prefix, std::vector<NamedTensor>& out) {
  for (size_t i = 0; i < layers.size(); ++i) {
    const auto& l = layers[i];
    const std::string p = prefix + std::to_string(i);
    if (l.weight.defined()) out.push_back({p + ".weight", l.weight, true});
    if (l.bias.defined()) out.push_back({p + ".bias", l.bias, true});
    if (l.fat_logits.defined()) out.push_back({p + ".fat_logits", l.fat_logits, true});
    if (l.spec.kind == LayerKind::BatchNorm2d) {
      out.push_back({p + ".running_mean", l.bn.running_mean, false});
      out.push_back({p + ".running_var", l.bn.running_var, false});
    }
    collect_state(l.body, p + ".body.", out);
  }
}

Tensor effective_weight(const Layer& l) {
  Tensor w = l.weight;
  if (l.spec.fat) w = fat_transform(w, l.fat_logits);
  if (l.spec.quant_bits != 32) w = quantize_weights(w, l.spec.quant_bits);
  return w;
}

struct TraceCursor {
  ActivationTrace* trace = nullptr;
  std::string pending;

  void record(const std::string& name, const Tensor& t) {
    trace->names.push_back(name);
    trace->taps.push_back(t);
  }
};

Tensor run_layers(std::vector<Layer>& layers, Tensor x, bool training, TraceCursor& cur, const std::string& prefix) {
  for (size_t i = 0; i < layers.size(); ++i) {
    Layer& l = layers[i];
    const std::string path = prefix + std::to_string(i);
    try {
      switch (l.spec.kind) {
        case LayerKind::Conv2d:
          x = ops::conv2d(x, effective_weight(l), l.spec.stride, l.spec.pad);
          if (cur.trace) {
            if (cur.trace->pre_activation) {
              cur.record(path, x);
            } else {
              cur.pending = path;
            }
          }
          break;
        case LayerKind::BatchNorm2d:
          x = ops::batch_norm2d(x, l.weight, l.bias, l.bn, training);
          break;
        case LayerKind::HardTanh:
        case LayerKind::ReLU:
          x = l.spec.kind == LayerKind::ReLU ? ops::relu(x) : ops::hardtanh(x);
          if (cur.trace && !cur.pending.empty()) {
            cur.record(cur.pending, x);
            cur.pending.clear();
          }
          break;
        case LayerKind::Residual: {
          Tensor shortcut = ops::shortcut_pad(x, l.spec.stride, l.spec.out_channels);
          Tensor body = run_layers(l.body, x, training, cur, path + ".body.");
          x = ops::relu(ops::add(body, shortcut));
          if (cur.trace && !cur.pending.empty()) {
            cur.record(cur.pending, x);
            cur.pending.clear();
          }
          break;
        }
        case LayerKind::GlobalAvgPool:
          x = ops::global_avg_pool(x);
          break;
        case LayerKind::Linear:
          if (x.rank() != 2) x = ops::reshape(x, {x.dim(0), x.numel() / x.dim(0)});
          x = ops::linear(x, effective_weight(l), l.bias);
          if (cur.trace) {
            cur.pending.clear();
            cur.record(path, x);
          }
          break;
      }
    } catch (const std::invalid_argument& e) {
      throw std::invalid_argument("layer " + path + " (" + to_string(l.spec.kind) + "): " + e.what());
    }
  }
  return x;
}

int count_weighted(const std::vector<LayerSpec>& specs) {
  int n = 0;
  for (const auto& s : specs) {
    if (s.kind == LayerKind::Conv2d || s.kind == LayerKind::Linear) ++n;
    n += count_weighted(s.body);
  }
  return n;
}

void collect_conv_weights(const std::vector<Layer>& layers, std::vector<Tensor>& out) {
  for (const auto& l : layers) {
    if (l.spec.kind == LayerKind::Conv2d) out.push_back(l.weight);
    collect_conv_weights(l.body, out);
  }
}

}  // namespace

Network::Network(std::vector<LayerSpec> specs, int64_t in_channels, int64_t height, int64_t width, uint64_t seed)
    : in_channels_(in_channels), height_(height), width_(width) {
  if (in_channels < 1 || height < 1 || width < 1) throw std::invalid_argument("network input shape must be positive");
  ShapeState st{{in_channels, height, width}};
  bool seen_conv = false;
  validate(specs, st, "", seen_conv);
  if (st.dims.size() != 1) throw std::invalid_argument("network must end in a linear head producing logits");
  num_classes_ = st.dims[0];
  std::mt19937_64 rng(seed);
  for (const auto& s : specs) layers_.push_back(init_layer(s, rng));
}

Network Network::clone() const {
  Network n;
  n.in_channels_ = in_channels_;
  n.height_ = height_;
  n.width_ = width_;
  n.num_classes_ = num_classes_;
  n.training_ = training_;
  for (const auto& l : layers_) n.layers_.push_back(deep_copy(l));
  return n;
}

Tensor Network::forward(const Tensor& x, ActivationTrace* trace) {
  if (x.rank() != 4 || x.dim(1) != in_channels_ || x.dim(2) != height_ || x.dim(3) != width_) {
    throw std::invalid_argument("layer input: expected batch of shape [B, " + std::to_string(in_channels_) + ", " +
                                std::to_string(height_) + ", " + std::to_string(width_) + "], got " +
                                shape_str(x.shape()));
  }
  TraceCursor cur;
  cur.trace = trace;
  return run_layers(layers_, x, training_, cur, "");
}

std::vector<NamedTensor> Network::state() const {
  std::vector<NamedTensor> out;
  collect_state(layers_, "", out);
  return out;
}

std::vector<Tensor> Network::parameters() const {
  std::vector<Tensor> out;
  for (auto& nt : state()) {
    if (nt.trainable) out.push_back(nt.tensor);
  }
  return out;
}

void Network::set_requires_grad(bool flag) {
  for (auto& p : parameters()) p.set_requires_grad(flag);
}

void Network::zero_grad() {
  for (auto& p : parameters()) p.zero_grad();
}

std::vector<LayerSpec> Network::specs() const {
  std::vector<LayerSpec> out;
  for (const auto& l : layers_) out.push_back(l.spec);
  return out;
}

int Network::weighted_layer_count() const { return count_weighted(specs()); }

int64_t Network::parameter_count() const {
  int64_t n = 0;
  for (const auto& p : parameters()) n += p.numel();
  return n;
}

Tensor Network::stem_weight() const {
  auto w = conv_weights();
  if (w.empty()) throw std::logic_error("network has no convolution");
  return w.front();
}

std::vector<Tensor> Network::conv_weights() const {
  std::vector<Tensor> out;
  collect_conv_weights(layers_, out);
  return out;
}

std::vector<LayerSpec> resnet_specs(const ResNetArgs& args) {
  if (args.depth_blocks < 1) throw std::invalid_argument("depth_blocks must be >= 1");
  if (args.width < 1) throw std::invalid_argument("width must be >= 1");
  if (args.num_classes < 2) throw std::invalid_argument("num_classes must be >= 2");
  if (!valid_quant_bits(args.quant_bits)) {
    throw std::invalid_argument("quantization bits must be one of 2, 4, 8, 32; got " + std::to_string(args.quant_bits));
  }
  auto quantized = [&](LayerSpec s, bool fat) {
    s.quant_bits = args.quant_bits;
    s.fat = fat && args.fat;
    return s;
  };
  std::vector<LayerSpec> specs;
  const int64_t base = 16 * static_cast<int64_t>(args.width);
  specs.push_back(LayerSpec::conv(args.in_channels, base, 3, 1, 1));
  specs.push_back(LayerSpec::batch_norm(base));
  specs.push_back(LayerSpec::activation(LayerKind::HardTanh));
  int64_t channels = base;
  for (int stage = 0; stage < 3; ++stage) {
    const int64_t out = base << stage;
    for (int block = 0; block < args.depth_blocks; ++block) {
      const int stride = (stage > 0 && block == 0) ? 2 : 1;
      std::vector<LayerSpec> body{
          quantized(LayerSpec::conv(channels, out, 3, stride, 1), true),
          LayerSpec::batch_norm(out),
          LayerSpec::activation(LayerKind::ReLU),
          quantized(LayerSpec::conv(out, out, 3, 1, 1), true),
          LayerSpec::batch_norm(out),
      };
      specs.push_back(LayerSpec::residual(std::move(body), stride, channels, out));
      channels = out;
    }
  }
  specs.push_back(LayerSpec::pool());
  specs.push_back(quantized(LayerSpec::dense(channels, args.num_classes), false));
  return specs;
}

Network build_resnet(const ResNetArgs& args, uint64_t seed) {
  return Network(resnet_specs(args), args.in_channels, args.image_size, args.image_size, seed);
}

FrozenParams::FrozenParams(Network& net) : params_(net.parameters()) {
  for (auto& p : params_) {
    flags_.push_back(p.requires_grad());
    p.set_requires_grad(false);
  }
}

FrozenParams::~FrozenParams() {
  for (size_t i = 0; i < params_.size(); ++i) params_[i].set_requires_grad(flags_[i]);
}

}  // namespace freqlens
