#pragma once

// Reverse-mode differentiation over dense NCHW tensors.
//
// A Tensor is a shared handle. Every differentiable op records a Node holding
// its inputs and a backward rule; nodes carry a sequence number taken at
// creation, so sorting by it replays the forward execution order. backward()
// walks that order in reverse and each rule accumulates into its inputs'
// gradients. Leaves (parameters, inputs) keep accumulating across backward()
// calls until zero_grad(); intermediate gradients are reset on every call.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace fogsight::ad {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string to_string(const Shape& shape);

template <typename T>
struct TensorImpl;

// Receives the output gradient and one span per input. A span is empty when
// that input does not need a gradient; rules must add into it, never assign.
template <typename T>
using BackwardFn = std::function<void(std::span<const T> grad_out,
                                      std::span<const std::span<T>> input_grads)>;

template <typename T>
struct Node {
  std::string op;
  std::vector<std::shared_ptr<TensorImpl<T>>> inputs;
  BackwardFn<T> backward;
  std::uint64_t seq = 0;
};

template <typename T>
struct TensorImpl {
  Shape shape;
  std::vector<T> data;
  std::vector<T> grad;  // empty until something accumulates into it
  bool requires_grad = false;
  std::shared_ptr<Node<T>> node;

  std::vector<T>& grad_buffer() {
    if (grad.empty()) grad.assign(data.size(), T(0));
    return grad;
  }
};

template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  Tensor(Shape shape, std::vector<T> data, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, T value, bool requires_grad = false);
  static Tensor scalar(T value, bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  std::size_t rank() const { return impl_->shape.size(); }
  std::size_t dim(std::size_t i) const { return impl_->shape.at(i); }
  std::size_t numel() const { return impl_->data.size(); }

  std::span<const T> data() const { return impl_->data; }
  // Only meant for leaves: parameters, optimizer updates, test fixtures.
  std::span<T> mutable_data() { return impl_->data; }
  T item() const;

  bool requires_grad() const { return impl_->requires_grad; }
  Tensor& set_requires_grad(bool on);

  bool has_grad() const { return !impl_->grad.empty(); }
  std::span<const T> grad() const { return impl_->grad; }
  std::span<T> mutable_grad() { return impl_->grad_buffer(); }
  void zero_grad();

  // d(this)/d(leaf) for every reachable leaf that requires a gradient.
  // Throws UsageError unless this is a single-element tensor on a recorded
  // graph (or itself a leaf requiring grad).
  void backward() const;

  // Leaf copy of the values with no graph attached.
  Tensor detach() const;

  // Null for leaves.
  const Node<T>* producer() const { return impl_->node.get(); }
  bool is_same(const Tensor& other) const { return impl_ == other.impl_; }
  const std::shared_ptr<TensorImpl<T>>& impl() const { return impl_; }

  explicit Tensor(std::shared_ptr<TensorImpl<T>> impl) : impl_(std::move(impl)) {}

 private:
  std::shared_ptr<TensorImpl<T>> impl_;
};

// Graph recording switch. Disabled inside a NoGradGuard scope; ops then
// produce plain leaves. Thread-local.
bool grad_enabled();

class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

// Builds an op result, recording a node when gradients are enabled and any
// input requires one. All primitives go through here; tests use it to build
// deliberately broken ops.
template <typename T>
Tensor<T> make_op(std::string op, Shape shape, std::vector<T> data,
                  const std::vector<Tensor<T>>& inputs, BackwardFn<T> backward);

extern template class Tensor<float>;
extern template class Tensor<double>;

}  // namespace fogsight::ad
