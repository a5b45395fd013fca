#include "freqlens/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

namespace freqlens {

int64_t shape_numel(const Shape& shape) {
  int64_t n = 1;
  for (auto d : shape) {
    if (d <= 0) throw std::invalid_argument("shape dimensions must be positive: " + shape_str(shape));
    n *= d;
  }
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Tensor make_tensor(std::shared_ptr<TensorImpl> impl) { return Tensor(std::move(impl)); }

Tensor Tensor::zeros(const Shape& shape, bool requires_grad) { return full(shape, 0.0f, requires_grad); }

Tensor Tensor::full(const Shape& shape, float value, bool requires_grad) {
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = shape;
  impl->data.assign(static_cast<size_t>(shape_numel(shape)), value);
  impl->requires_grad = requires_grad;
  return Tensor(std::move(impl));
}

Tensor Tensor::from(const Shape& shape, std::vector<float> values, bool requires_grad) {
  if (static_cast<int64_t>(values.size()) != shape_numel(shape)) {
    throw std::invalid_argument("value count " + std::to_string(values.size()) + " does not match shape " +
                                shape_str(shape));
  }
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = shape;
  impl->data = std::move(values);
  impl->requires_grad = requires_grad;
  return Tensor(std::move(impl));
}

Tensor Tensor::scalar(float value, bool requires_grad) { return from({1}, {value}, requires_grad); }

const Shape& Tensor::shape() const { return impl_->shape; }
int64_t Tensor::dim(size_t axis) const { return impl_->shape.at(axis); }
size_t Tensor::rank() const { return impl_->shape.size(); }
int64_t Tensor::numel() const { return static_cast<int64_t>(impl_->data.size()); }

std::span<float> Tensor::data() { return impl_->data; }
std::span<const float> Tensor::data() const { return impl_->data; }

float Tensor::item() const {
  if (impl_->data.size() != 1) throw std::logic_error("item() on tensor of shape " + shape_str(impl_->shape));
  return impl_->data[0];
}

std::span<float> Tensor::grad() {
  if (impl_->grad.size() != impl_->data.size()) impl_->grad.assign(impl_->data.size(), 0.0f);
  return impl_->grad;
}

std::span<const float> Tensor::grad() const {
  if (impl_->grad.size() != impl_->data.size()) impl_->grad.assign(impl_->data.size(), 0.0f);
  return impl_->grad;
}

bool Tensor::has_grad() const { return impl_->grad.size() == impl_->data.size(); }

void Tensor::zero_grad() {
  if (has_grad()) std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0f);
}

bool Tensor::requires_grad() const { return impl_->requires_grad; }
void Tensor::set_requires_grad(bool flag) { impl_->requires_grad = flag; }
bool Tensor::is_leaf() const { return impl_->grad_fn == nullptr; }

Tensor Tensor::detach() const {
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = impl_->shape;
  impl->data = impl_->data;
  return Tensor(std::move(impl));
}

Tensor Tensor::clone() const {
  auto t = detach();
  t.impl_->requires_grad = impl_->requires_grad;
  return t;
}

void Tensor::backward() {
  if (impl_->data.size() != 1) {
    throw std::logic_error("backward() requires a scalar loss, got shape " + shape_str(impl_->shape));
  }
  if (!impl_->requires_grad) throw std::logic_error("backward() on a tensor that does not require grad");
  if (impl_->grad_fn && impl_->grad_fn->consumed) {
    throw std::logic_error("backward() called twice on a consumed graph");
  }

  // Iterative post-order DFS gives a topological order of the graph.
  // Shared ownership keeps intermediates alive while nodes release their inputs.
  std::vector<std::shared_ptr<TensorImpl>> order;
  std::unordered_set<TensorImpl*> visited;
  std::vector<std::pair<std::shared_ptr<TensorImpl>, size_t>> stack;
  stack.emplace_back(impl_, 0);
  visited.insert(impl_.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    const auto& fn = node->grad_fn;
    if (fn && next < fn->inputs.size()) {
      const auto& child = fn->inputs[next++].impl_;
      if (child && child->requires_grad && visited.insert(child.get()).second) stack.emplace_back(child, 0);
      continue;
    }
    order.push_back(node);
    stack.pop_back();
  }

  grad();
  impl_->grad[0] += 1.0f;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    TensorImpl* node = it->get();
    auto fn = node->grad_fn;
    if (!fn) continue;
    if (fn->consumed) throw std::logic_error("backward() reached a consumed node: " + fn->name);
    if (node->grad.size() != node->data.size()) node->grad.assign(node->data.size(), 0.0f);
    fn->backward_fn(node->grad);
    fn->consumed = true;
    fn->backward_fn = nullptr;
    fn->inputs.clear();
  }
}

namespace {
thread_local bool g_grad_enabled = true;
}

bool GradMode::enabled() { return g_grad_enabled; }
void GradMode::set_enabled(bool flag) { g_grad_enabled = flag; }

namespace detail {

bool needs_graph(std::initializer_list<const Tensor*> inputs) {
  if (!GradMode::enabled()) return false;
  for (const Tensor* t : inputs) {
    if (t && t->defined() && t->requires_grad()) return true;
  }
  return false;
}

Tensor make_result(Shape shape, std::vector<float> values, bool record, std::vector<Tensor> inputs,
                   std::function<void(std::span<const float>)> backward_fn, std::string name) {
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = std::move(shape);
  impl->data = std::move(values);
  if (record) {
    impl->requires_grad = true;
    auto node = std::make_shared<Node>();
    node->inputs = std::move(inputs);
    node->backward_fn = std::move(backward_fn);
    node->name = std::move(name);
    impl->grad_fn = std::move(node);
  }
  return make_tensor(std::move(impl));
}

void accumulate_grad(const Tensor& t, std::span<const float> delta) {
  if (!t.requires_grad()) return;
  auto g = const_cast<Tensor&>(t).grad();
  for (size_t i = 0; i < g.size(); ++i) g[i] += delta[i];
}

}  // namespace detail

bool all_finite(std::span<const float> values) {
  return std::all_of(values.begin(), values.end(), [](float v) { return std::isfinite(v); });
}

}  // namespace freqlens
