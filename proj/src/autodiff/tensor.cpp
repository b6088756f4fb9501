#include "fogsight/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <sstream>
#include <unordered_set>

#include "fogsight/error.hpp"

namespace fogsight::ad {

namespace {

thread_local bool t_grad_enabled = true;
std::atomic<std::uint64_t> g_next_seq{1};

}  // namespace

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

bool grad_enabled() { return t_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = previous_; }

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> data, bool requires_grad) {
  if (shape.empty()) throw DimensionError("tensor shape must have at least one dimension");
  for (auto d : shape) {
    if (d == 0) throw DimensionError("tensor dimensions must be positive, got " + to_string(shape));
  }
  if (ad::numel(shape) != data.size()) {
    throw DimensionError("shape " + to_string(shape) + " does not match " +
                         std::to_string(data.size()) + " values");
  }
  impl_ = std::make_shared<TensorImpl<T>>();
  impl_->shape = std::move(shape);
  impl_->data = std::move(data);
  impl_->requires_grad = requires_grad;
}

template <typename T>
Tensor<T> Tensor<T>::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), T(0), requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::full(Shape shape, T value, bool requires_grad) {
  const auto n = ad::numel(shape);
  return Tensor(std::move(shape), std::vector<T>(n, value), requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::scalar(T value, bool requires_grad) {
  return Tensor(Shape{1}, std::vector<T>{value}, requires_grad);
}

template <typename T>
T Tensor<T>::item() const {
  if (numel() != 1) throw UsageError("item() on tensor of shape " + to_string(shape()));
  return impl_->data[0];
}

template <typename T>
Tensor<T>& Tensor<T>::set_requires_grad(bool on) {
  if (impl_->node && !on) throw UsageError("cannot clear requires_grad on a non-leaf tensor");
  impl_->requires_grad = on;
  return *this;
}

template <typename T>
void Tensor<T>::zero_grad() {
  std::fill(impl_->grad.begin(), impl_->grad.end(), T(0));
}

template <typename T>
Tensor<T> Tensor<T>::detach() const {
  return Tensor(impl_->shape, impl_->data, false);
}

template <typename T>
void Tensor<T>::backward() const {
  if (!impl_) throw UsageError("backward() on an undefined tensor");
  if (numel() != 1) {
    throw UsageError("backward() needs a scalar loss, got shape " + to_string(shape()));
  }
  if (!impl_->requires_grad) {
    throw UsageError("backward() on a tensor that does not require grad (empty tape)");
  }

  std::vector<TensorImpl<T>*> order;
  std::unordered_set<TensorImpl<T>*> seen;
  std::vector<TensorImpl<T>*> stack{impl_.get()};
  while (!stack.empty()) {
    auto* t = stack.back();
    stack.pop_back();
    if (!t->node || !seen.insert(t).second) continue;
    order.push_back(t);
    for (const auto& in : t->node->inputs) {
      if (in->requires_grad) stack.push_back(in.get());
    }
  }
  std::sort(order.begin(), order.end(),
            [](const TensorImpl<T>* a, const TensorImpl<T>* b) {
              return a->node->seq > b->node->seq;
            });

  for (auto* t : order) t->grad.assign(t->data.size(), T(0));
  impl_->grad_buffer()[0] += T(1);

  std::vector<std::span<T>> spans;
  for (auto* t : order) {
    const auto& node = *t->node;
    spans.clear();
    for (const auto& in : node.inputs) {
      spans.push_back(in->requires_grad ? std::span<T>(in->grad_buffer()) : std::span<T>());
    }
    node.backward(std::span<const T>(t->grad), std::span<const std::span<T>>(spans));
  }
}

template <typename T>
Tensor<T> make_op(std::string op, Shape shape, std::vector<T> data,
                  const std::vector<Tensor<T>>& inputs, BackwardFn<T> backward) {
  Tensor<T> out(std::move(shape), std::move(data), false);
  if (!grad_enabled()) return out;
  const bool any = std::any_of(inputs.begin(), inputs.end(),
                               [](const Tensor<T>& t) { return t.requires_grad(); });
  if (!any) return out;
  auto node = std::make_shared<Node<T>>();
  node->op = std::move(op);
  node->backward = std::move(backward);
  node->seq = g_next_seq.fetch_add(1, std::memory_order_relaxed);
  node->inputs.reserve(inputs.size());
  for (const auto& in : inputs) node->inputs.push_back(in.impl());
  out.impl()->node = std::move(node);
  out.impl()->requires_grad = true;
  return out;
}

template class Tensor<float>;
template class Tensor<double>;
template Tensor<float> make_op<float>(std::string, Shape, std::vector<float>,
                                      const std::vector<Tensor<float>>&, BackwardFn<float>);
template Tensor<double> make_op<double>(std::string, Shape, std::vector<double>,
                                        const std::vector<Tensor<double>>&, BackwardFn<double>);

}  // namespace fogsight::ad
