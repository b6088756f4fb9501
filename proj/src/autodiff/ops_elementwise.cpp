#include <algorithm>
#include <cmath>

#include "fogsight/error.hpp"
#include "fogsight/kernels.hpp"
#include "fogsight/ops.hpp"

namespace fogsight::ad {

namespace {

template <typename T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + to_string(a.shape()) +
                         " vs " + to_string(b.shape()));
  }
}

// Builds an elementwise unary op from a forward map and a local derivative
// evaluated from (input, output).
template <typename T, typename Fwd, typename Deriv>
Tensor<T> unary(const char* name, const Tensor<T>& x, Fwd fwd, Deriv deriv) {
  const auto in = x.data();
  std::vector<T> out(in.size());
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = fwd(in[i]);
  auto result = make_op<T>(name, x.shape(), std::move(out), {x}, nullptr);
  if (auto* node = result.impl()->node.get()) {
    // The closure reads the output through a weak handle to avoid a cycle.
    std::weak_ptr<TensorImpl<T>> weak_out = result.impl();
    node->backward = [x, weak_out, deriv](std::span<const T> gy,
                                          std::span<const std::span<T>> g) {
      if (g[0].empty()) return;
      const auto out_impl = weak_out.lock();
      const auto xs = x.data();
      for (std::size_t i = 0; i < gy.size(); ++i) {
        g[0][i] += gy[i] * deriv(xs[i], out_impl->data[i]);
      }
    };
  }
  return result;
}

}  // namespace

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "add");
  std::vector<T> out(a.numel());
  kernels::add(out.size(), a.data().data(), b.data().data(), out.data());
  return make_op<T>("add", a.shape(), std::move(out), {a, b},
                    [](std::span<const T> gy, std::span<const std::span<T>> g) {
                      for (const auto& gi : g) {
                        if (!gi.empty()) kernels::accumulate(gy.size(), gy.data(), gi.data());
                      }
                    });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "sub");
  const auto x = a.data(), y = b.data();
  std::vector<T> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] - y[i];
  return make_op<T>("sub", a.shape(), std::move(out), {a, b},
                    [](std::span<const T> gy, std::span<const std::span<T>> g) {
                      if (!g[0].empty()) kernels::accumulate(gy.size(), gy.data(), g[0].data());
                      if (!g[1].empty()) kernels::axpy(gy.size(), T(-1), gy.data(), g[1].data());
                    });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "mul");
  const auto x = a.data(), y = b.data();
  std::vector<T> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * y[i];
  return make_op<T>("mul", a.shape(), std::move(out), {a, b},
                    [a, b](std::span<const T> gy, std::span<const std::span<T>> g) {
                      const auto x = a.data(), y = b.data();
                      if (!g[0].empty()) {
                        for (std::size_t i = 0; i < gy.size(); ++i) g[0][i] += gy[i] * y[i];
                      }
                      if (!g[1].empty()) {
                        for (std::size_t i = 0; i < gy.size(); ++i) g[1][i] += gy[i] * x[i];
                      }
                    });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& x, T factor) {
  const auto in = x.data();
  std::vector<T> out(in.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = factor * in[i];
  return make_op<T>("scale", x.shape(), std::move(out), {x},
                    [factor](std::span<const T> gy, std::span<const std::span<T>> g) {
                      if (!g[0].empty()) kernels::axpy(gy.size(), factor, gy.data(), g[0].data());
                    });
}

template <typename T>
Tensor<T> add_scalar(const Tensor<T>& x, T value) {
  const auto in = x.data();
  std::vector<T> out(in.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = in[i] + value;
  return make_op<T>("add_scalar", x.shape(), std::move(out), {x},
                    [](std::span<const T> gy, std::span<const std::span<T>> g) {
                      if (!g[0].empty()) kernels::accumulate(gy.size(), gy.data(), g[0].data());
                    });
}

template <typename T>
Tensor<T> neg(const Tensor<T>& x) {
  return scale(x, T(-1));
}

template <typename T>
Tensor<T> log(const Tensor<T>& x) {
  return unary<T>(
      "log", x, [](T v) { return std::log(v); }, [](T v, T) { return T(1) / v; });
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
  return unary<T>(
      "sigmoid", x,
      [](T v) {
        if (v >= T(0)) return T(1) / (T(1) + std::exp(-v));
        const T e = std::exp(v);
        return e / (T(1) + e);
      },
      [](T, T y) { return y * (T(1) - y); });
}

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  std::vector<T> out(x.numel());
  kernels::relu(out.size(), x.data().data(), out.data());
  return make_op<T>("relu", x.shape(), std::move(out), {x},
                    [x](std::span<const T> gy, std::span<const std::span<T>> g) {
                      if (!g[0].empty()) {
                        kernels::relu_backward(gy.size(), x.data().data(), gy.data(), g[0].data());
                      }
                    });
}

template <typename T>
Tensor<T> leaky_relu(const Tensor<T>& x, T slope) {
  return unary<T>(
      "leaky_relu", x, [slope](T v) { return v > T(0) ? v : slope * v; },
      [slope](T v, T) { return v > T(0) ? T(1) : slope; });
}

template <typename T>
Tensor<T> clamp(const Tensor<T>& x, T lo, T hi) {
  if (!(lo <= hi)) throw ParameterError("clamp: lo must not exceed hi");
  return unary<T>(
      "clamp", x, [lo, hi](T v) { return std::clamp(v, lo, hi); },
      [lo, hi](T v, T) { return (v >= lo && v <= hi) ? T(1) : T(0); });
}

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
  T total = T(0);
  for (T v : x.data()) total += v;
  return make_op<T>("sum", Shape{1}, std::vector<T>{total}, {x},
                    [](std::span<const T> gy, std::span<const std::span<T>> g) {
                      if (g[0].empty()) return;
                      for (auto& v : g[0]) v += gy[0];
                    });
}

template <typename T>
Tensor<T> mean(const Tensor<T>& x) {
  T total = T(0);
  for (T v : x.data()) total += v;
  const T n = static_cast<T>(x.numel());
  return make_op<T>("mean", Shape{1}, std::vector<T>{total / n}, {x},
                    [n](std::span<const T> gy, std::span<const std::span<T>> g) {
                      if (g[0].empty()) return;
                      const T share = gy[0] / n;
                      for (auto& v : g[0]) v += share;
                    });
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
  if (numel(shape) != x.numel()) {
    throw DimensionError("reshape: " + to_string(x.shape()) + " -> " + to_string(shape));
  }
  std::vector<T> out(x.data().begin(), x.data().end());
  return make_op<T>("reshape", std::move(shape), std::move(out), {x},
                    [](std::span<const T> gy, std::span<const std::span<T>> g) {
                      if (!g[0].empty()) kernels::accumulate(gy.size(), gy.data(), g[0].data());
                    });
}

#define FOGSIGHT_INSTANTIATE(T)                                           \
  template Tensor<T> add<T>(const Tensor<T>&, const Tensor<T>&);          \
  template Tensor<T> sub<T>(const Tensor<T>&, const Tensor<T>&);          \
  template Tensor<T> mul<T>(const Tensor<T>&, const Tensor<T>&);          \
  template Tensor<T> scale<T>(const Tensor<T>&, T);                       \
  template Tensor<T> add_scalar<T>(const Tensor<T>&, T);                  \
  template Tensor<T> neg<T>(const Tensor<T>&);                            \
  template Tensor<T> log<T>(const Tensor<T>&);                            \
  template Tensor<T> sigmoid<T>(const Tensor<T>&);                        \
  template Tensor<T> relu<T>(const Tensor<T>&);                           \
  template Tensor<T> leaky_relu<T>(const Tensor<T>&, T);                  \
  template Tensor<T> clamp<T>(const Tensor<T>&, T, T);                    \
  template Tensor<T> sum<T>(const Tensor<T>&);                            \
  template Tensor<T> mean<T>(const Tensor<T>&);                           \
  template Tensor<T> reshape<T>(const Tensor<T>&, Shape);

FOGSIGHT_INSTANTIATE(float)
FOGSIGHT_INSTANTIATE(double)
#undef FOGSIGHT_INSTANTIATE

}  // namespace fogsight::ad
