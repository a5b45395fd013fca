#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace freqlens {

using Shape = std::vector<int64_t>;

int64_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

struct TensorImpl;

/// Reference-counted handle to a dense float32 array with optional gradient.
/// Copies share storage; use clone() for a deep copy.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(const Shape& shape, bool requires_grad = false);
  static Tensor full(const Shape& shape, float value, bool requires_grad = false);
  static Tensor from(const Shape& shape, std::vector<float> values, bool requires_grad = false);
  static Tensor scalar(float value, bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const;
  int64_t dim(size_t axis) const;
  size_t rank() const;
  int64_t numel() const;

  std::span<float> data();
  std::span<const float> data() const;
  float item() const;

  /// Gradient buffer; allocated (zero-filled) on first access.
  std::span<float> grad();
  std::span<const float> grad() const;
  bool has_grad() const;
  void zero_grad();

  bool requires_grad() const;
  void set_requires_grad(bool flag);
  bool is_leaf() const;

  /// Reverse-mode sweep from this scalar. The graph is consumed afterwards.
  void backward();

  Tensor detach() const;
  Tensor clone() const;

  TensorImpl* impl() const { return impl_.get(); }
  bool same(const Tensor& other) const { return impl_ == other.impl_; }

 private:
  explicit Tensor(std::shared_ptr<TensorImpl> impl) : impl_(std::move(impl)) {}
  std::shared_ptr<TensorImpl> impl_;

  friend Tensor make_tensor(std::shared_ptr<TensorImpl>);
};

/// One recorded operation. backward_fn reads the output gradient and
/// accumulates into the gradients of the inputs that require it.
struct Node {
  std::vector<Tensor> inputs;
  std::function<void(std::span<const float> grad_out)> backward_fn;
  bool consumed = false;
  std::string name;
};

struct TensorImpl {
  Shape shape;
  std::vector<float> data;
  std::vector<float> grad;
  bool requires_grad = false;
  std::shared_ptr<Node> grad_fn;
};

/// Thread-local switch for graph recording.
class GradMode {
 public:
  static bool enabled();
  static void set_enabled(bool flag);
};

class NoGradGuard {
 public:
  NoGradGuard() : prev_(GradMode::enabled()) { GradMode::set_enabled(false); }
  ~NoGradGuard() { GradMode::set_enabled(prev_); }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

namespace detail {

/// True when an op over these inputs should record a graph node.
bool needs_graph(std::initializer_list<const Tensor*> inputs);

/// Wraps freshly computed output values. When `record` is set the result
/// carries a node that runs `backward_fn` during the reverse sweep.
Tensor make_result(Shape shape, std::vector<float> values, bool record, std::vector<Tensor> inputs,
                   std::function<void(std::span<const float>)> backward_fn, std::string name);

/// Adds `delta` into t's gradient buffer when t requires grad.
void accumulate_grad(const Tensor& t, std::span<const float> delta);

}  // namespace detail

bool all_finite(std::span<const float> values);

}  // namespace freqlens
