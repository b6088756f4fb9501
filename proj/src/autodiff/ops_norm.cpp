#include <algorithm>
#include <cmath>

#include "fogsight/error.hpp"
#include "fogsight/kernels.hpp"
#include "fogsight/ops.hpp"

namespace fogsight::ad {

template <typename T>
BatchNormBuffers<T> BatchNormBuffers<T>::create(std::size_t channels) {
  return {Tensor<T>::zeros({channels}), Tensor<T>::full({channels}, T(1)),
          Tensor<T>::zeros({1})};
}

template <typename T>
Tensor<T> batch_norm2d(const Tensor<T>& input, const Tensor<T>& gamma, const Tensor<T>& beta,
                       BatchNormBuffers<T> buffers, Mode mode, T momentum, T eps) {
  if (!input.defined() || input.rank() != 4) {
    throw DimensionError("batch_norm2d: input must be rank 4");
  }
  const std::size_t n = input.dim(0), c = input.dim(1), plane = input.dim(2) * input.dim(3);
  for (const Tensor<T>* t : std::initializer_list<const Tensor<T>*>{&gamma, &beta, &buffers.running_mean, &buffers.running_var}) {
    if (t->numel() != c) {
      throw DimensionError("batch_norm2d: parameter length " + std::to_string(t->numel()) +
                           " does not match " + std::to_string(c) + " channels");
    }
  }
  const T* x = input.data().data();
  const T* gm = gamma.data().data();
  const T* bt = beta.data().data();
  const std::size_t count = n * plane;

  std::vector<T> mean(c), inv_std(c);
  if (mode == Mode::train) {
    auto rm = buffers.running_mean.mutable_data();
    auto rv = buffers.running_var.mutable_data();
    T& tracked = buffers.tracked.mutable_data()[0];
    for (std::size_t ch = 0; ch < c; ++ch) {
      double s = 0.0;
      for (std::size_t b = 0; b < n; ++b) {
        const T* src = x + (b * c + ch) * plane;
        for (std::size_t i = 0; i < plane; ++i) s += src[i];
      }
      const double mu = s / static_cast<double>(count);
      double ss = 0.0;
      for (std::size_t b = 0; b < n; ++b) {
        const T* src = x + (b * c + ch) * plane;
        for (std::size_t i = 0; i < plane; ++i) {
          const double d = src[i] - mu;
          ss += d * d;
        }
      }
      const double var = ss / static_cast<double>(count);
      mean[ch] = static_cast<T>(mu);
      inv_std[ch] = static_cast<T>(1.0 / std::sqrt(var + static_cast<double>(eps)));
      const double unbiased = count > 1 ? var * count / static_cast<double>(count - 1) : var;
      if (tracked == T(0)) {
        rm[ch] = static_cast<T>(mu);
        rv[ch] = static_cast<T>(unbiased);
      } else {
        rm[ch] = (T(1) - momentum) * rm[ch] + momentum * static_cast<T>(mu);
        rv[ch] = (T(1) - momentum) * rv[ch] + momentum * static_cast<T>(unbiased);
      }
    }
    tracked += T(1);
  } else {
    if (buffers.tracked.data()[0] == T(0)) {
      throw StateError("batch_norm2d: eval mode with uninitialised running statistics");
    }
    const auto rm = buffers.running_mean.data();
    const auto rv = buffers.running_var.data();
    for (std::size_t ch = 0; ch < c; ++ch) {
      mean[ch] = rm[ch];
      inv_std[ch] = T(1) / std::sqrt(rv[ch] + eps);
    }
  }

  std::vector<T> xhat(input.numel()), out(input.numel());
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      const std::size_t off = (b * c + ch) * plane;
      for (std::size_t i = 0; i < plane; ++i) {
        const T xh = (x[off + i] - mean[ch]) * inv_std[ch];
        xhat[off + i] = xh;
        out[off + i] = gm[ch] * xh + bt[ch];
      }
    }
  }

  return make_op<T>(
      "batch_norm2d", input.shape(), std::move(out), {input, gamma, beta},
      [gamma, xhat = std::move(xhat), inv_std, n, c, plane, mode](
          std::span<const T> gy, std::span<const std::span<T>> grads) {
        const T* gm = gamma.data().data();
        const T m = static_cast<T>(n * plane);
        for (std::size_t ch = 0; ch < c; ++ch) {
          T sum_gy = T(0), sum_gy_xhat = T(0);
          for (std::size_t b = 0; b < n; ++b) {
            const std::size_t off = (b * c + ch) * plane;
            for (std::size_t i = 0; i < plane; ++i) {
              sum_gy += gy[off + i];
              sum_gy_xhat += gy[off + i] * xhat[off + i];
            }
          }
          if (!grads[1].empty()) grads[1][ch] += sum_gy_xhat;
          if (!grads[2].empty()) grads[2][ch] += sum_gy;
          if (grads[0].empty()) continue;
          const T k = gm[ch] * inv_std[ch];
          for (std::size_t b = 0; b < n; ++b) {
            const std::size_t off = (b * c + ch) * plane;
            for (std::size_t i = 0; i < plane; ++i) {
              if (mode == Mode::train) {
                grads[0][off + i] +=
                    k * (gy[off + i] - sum_gy / m - xhat[off + i] * (sum_gy_xhat / m));
              } else {
                grads[0][off + i] += k * gy[off + i];
              }
            }
          }
        }
      });
}

template <typename T>
Tensor<T> dropout(const Tensor<T>& input, double p, Rng& rng, Mode mode) {
  if (p < 0.0 || p >= 1.0) throw ParameterError("dropout: p must lie in [0, 1)");
  if (mode == Mode::eval || p == 0.0) return input;
  const T keep_scale = static_cast<T>(1.0 / (1.0 - p));
  std::vector<T> mask(input.numel());
  for (auto& m : mask) m = rng.bernoulli(p) ? T(0) : keep_scale;
  const auto x = input.data();
  std::vector<T> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * mask[i];
  return make_op<T>("dropout", input.shape(), std::move(out), {input},
                    [mask = std::move(mask)](std::span<const T> gy,
                                             std::span<const std::span<T>> grads) {
                      if (grads[0].empty()) return;
                      for (std::size_t i = 0; i < gy.size(); ++i) grads[0][i] += gy[i] * mask[i];
                    });
}

template <typename T>
Tensor<T> concat_channels(const std::vector<Tensor<T>>& parts) {
  if (parts.empty()) throw UsageError("concat_channels: no inputs");
  for (const auto& t : parts) {
    if (!t.defined() || t.rank() != 4) throw DimensionError("concat_channels: inputs must be rank 4");
    if (t.dim(0) != parts[0].dim(0) || t.dim(2) != parts[0].dim(2) ||
        t.dim(3) != parts[0].dim(3)) {
      throw DimensionError("concat_channels: non-channel dims differ: " +
                           to_string(parts[0].shape()) + " vs " + to_string(t.shape()));
    }
  }
  const std::size_t n = parts[0].dim(0), plane = parts[0].dim(2) * parts[0].dim(3);
  std::vector<std::size_t> widths;
  std::size_t total_c = 0;
  for (const auto& t : parts) {
    widths.push_back(t.dim(1));
    total_c += t.dim(1);
  }
  std::vector<T> out(n * total_c * plane);
  for (std::size_t b = 0; b < n; ++b) {
    std::size_t c0 = 0;
    for (std::size_t k = 0; k < parts.size(); ++k) {
      const T* src = parts[k].data().data() + b * widths[k] * plane;
      std::copy(src, src + widths[k] * plane, out.data() + (b * total_c + c0) * plane);
      c0 += widths[k];
    }
  }
  return make_op<T>(
      "concat_channels", Shape{n, total_c, parts[0].dim(2), parts[0].dim(3)}, std::move(out),
      parts,
      [widths, n, total_c, plane](std::span<const T> gy, std::span<const std::span<T>> grads) {
        for (std::size_t b = 0; b < n; ++b) {
          std::size_t c0 = 0;
          for (std::size_t k = 0; k < widths.size(); ++k) {
            if (!grads[k].empty()) {
              kernels::accumulate(widths[k] * plane, gy.data() + (b * total_c + c0) * plane,
                                  grads[k].data() + b * widths[k] * plane);
            }
            c0 += widths[k];
          }
        }
      });
}

template <typename T>
Tensor<T> softmax_channel(const Tensor<T>& logits) {
  if (!logits.defined() || logits.rank() < 2) {
    throw DimensionError("softmax_channel: input must have rank >= 2");
  }
  const std::size_t n = logits.dim(0), k = logits.dim(1);
  const std::size_t plane = logits.numel() / (n * k);
  const T* a = logits.data().data();
  std::vector<T> out(logits.numel());
  for (std::size_t b = 0; b < n; ++b) {
    const T* src = a + b * k * plane;
    T* dst = out.data() + b * k * plane;
    for (std::size_t i = 0; i < plane; ++i) {
      T mx = src[i];
      for (std::size_t c = 1; c < k; ++c) mx = std::max(mx, src[c * plane + i]);
      T denom = T(0);
      for (std::size_t c = 0; c < k; ++c) {
        const T e = std::exp(src[c * plane + i] - mx);
        dst[c * plane + i] = e;
        denom += e;
      }
      for (std::size_t c = 0; c < k; ++c) dst[c * plane + i] /= denom;
    }
  }
  auto result = make_op<T>("softmax_channel", logits.shape(), std::move(out), {logits}, nullptr);
  if (auto* node = result.impl()->node.get()) {
    std::weak_ptr<TensorImpl<T>> weak_out = result.impl();
    node->backward = [weak_out, n, k, plane](std::span<const T> gy,
                                             std::span<const std::span<T>> grads) {
      if (grads[0].empty()) return;
      const auto& p = weak_out.lock()->data;
      for (std::size_t b = 0; b < n; ++b) {
        const std::size_t off = b * k * plane;
        for (std::size_t i = 0; i < plane; ++i) {
          T dot = T(0);
          for (std::size_t c = 0; c < k; ++c) dot += p[off + c * plane + i] * gy[off + c * plane + i];
          for (std::size_t c = 0; c < k; ++c) {
            const std::size_t idx = off + c * plane + i;
            grads[0][idx] += p[idx] * (gy[idx] - dot);
          }
        }
      }
    };
  }
  return result;
}

template <typename T>
Tensor<T> weighted_cross_entropy(const Tensor<T>& logits, std::span<const std::uint8_t> labels,
                                 std::span<const T> class_weights, Reduction reduction,
                                 CrossEntropyInfo* info) {
  if (!logits.defined() || logits.rank() != 4) {
    throw DimensionError("weighted_cross_entropy: logits must be [N,K,H,W]");
  }
  const std::size_t n = logits.dim(0), k = logits.dim(1), plane = logits.dim(2) * logits.dim(3);
  if (labels.size() != n * plane) {
    throw DimensionError("weighted_cross_entropy: " + std::to_string(labels.size()) +
                         " labels for logits " + to_string(logits.shape()));
  }
  if (!class_weights.empty() && class_weights.size() != k) {
    throw DimensionError("weighted_cross_entropy: " + std::to_string(class_weights.size()) +
                         " class weights for " + std::to_string(k) + " classes");
  }
  std::vector<T> weights(k, T(1));
  if (!class_weights.empty()) std::copy(class_weights.begin(), class_weights.end(), weights.begin());

  const T* a = logits.data().data();
  std::vector<T> probs(logits.numel());
  std::vector<std::uint8_t> label_copy(labels.begin(), labels.end());
  double total = 0.0;
  std::size_t valid = 0;
  for (std::size_t b = 0; b < n; ++b) {
    const std::size_t off = b * k * plane;
    for (std::size_t i = 0; i < plane; ++i) {
      T mx = a[off + i];
      for (std::size_t c = 1; c < k; ++c) mx = std::max(mx, a[off + c * plane + i]);
      T denom = T(0);
      for (std::size_t c = 0; c < k; ++c) {
        const T e = std::exp(a[off + c * plane + i] - mx);
        probs[off + c * plane + i] = e;
        denom += e;
      }
      for (std::size_t c = 0; c < k; ++c) probs[off + c * plane + i] /= denom;
      const std::uint8_t l = label_copy[b * plane + i];
      if (l == kIgnoreLabel) continue;
      if (l >= k) {
        throw ParameterError("weighted_cross_entropy: label " + std::to_string(l) +
                             " out of range for " + std::to_string(k) + " classes");
      }
      const double lse = static_cast<double>(mx) + std::log(static_cast<double>(denom));
      total += static_cast<double>(weights[l]) * (lse - static_cast<double>(a[off + l * plane + i]));
      ++valid;
    }
  }
  if (info) info->valid_pixels = valid;
  const double divisor = (reduction == Reduction::mean && valid > 0) ? static_cast<double>(valid) : 1.0;
  const T loss = valid > 0 ? static_cast<T>(total / divisor) : T(0);

  return make_op<T>(
      "weighted_cross_entropy", Shape{1}, std::vector<T>{loss}, {logits},
      [probs = std::move(probs), label_copy = std::move(label_copy), weights, n, k, plane,
       divisor](std::span<const T> gy, std::span<const std::span<T>> grads) {
        if (grads[0].empty()) return;
        const T scale = gy[0] / static_cast<T>(divisor);
        for (std::size_t b = 0; b < n; ++b) {
          const std::size_t off = b * k * plane;
          for (std::size_t i = 0; i < plane; ++i) {
            const std::uint8_t l = label_copy[b * plane + i];
            if (l == kIgnoreLabel) continue;
            const T w = scale * weights[l];
            for (std::size_t c = 0; c < k; ++c) {
              const std::size_t idx = off + c * plane + i;
              grads[0][idx] += w * (probs[idx] - (c == l ? T(1) : T(0)));
            }
          }
        }
      });
}

#define FOGSIGHT_INSTANTIATE(T)                                                           \
  template struct BatchNormBuffers<T>;                                                    \
  template Tensor<T> batch_norm2d<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, \
                                     BatchNormBuffers<T>, Mode, T, T);                    \
  template Tensor<T> dropout<T>(const Tensor<T>&, double, Rng&, Mode);                    \
  template Tensor<T> concat_channels<T>(const std::vector<Tensor<T>>&);                   \
  template Tensor<T> softmax_channel<T>(const Tensor<T>&);                                \
  template Tensor<T> weighted_cross_entropy<T>(const Tensor<T>&,                          \
                                               std::span<const std::uint8_t>,             \
                                               std::span<const T>, Reduction,             \
                                               CrossEntropyInfo*);

FOGSIGHT_INSTANTIATE(float)
FOGSIGHT_INSTANTIATE(double)
#undef FOGSIGHT_INSTANTIATE

}  // namespace fogsight::ad
