#pragma once

// Differentiable primitives. Image tensors are NCHW, row-major.

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "fogsight/rng.hpp"
#include "fogsight/tensor.hpp"

namespace fogsight::ad {

enum class Mode { train, eval };

struct Conv2dParams {
  std::size_t stride_h = 1, stride_w = 1;
  std::size_t pad_h = 0, pad_w = 0;
  std::size_t dilation_h = 1, dilation_w = 1;

  static Conv2dParams uniform(std::size_t stride, std::size_t padding,
                              std::size_t dilation = 1) {
    return {stride, stride, padding, padding, dilation, dilation};
  }
};

// Output extent of a strided, padded, dilated window sweep. Throws
// DimensionError when the padded input is smaller than the dilated kernel.
std::size_t conv_out_extent(std::size_t in, std::size_t kernel, std::size_t stride,
                            std::size_t pad, std::size_t dilation);

template <typename T> Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> scale(const Tensor<T>& x, T factor);
template <typename T> Tensor<T> add_scalar(const Tensor<T>& x, T value);
template <typename T> Tensor<T> neg(const Tensor<T>& x);
template <typename T> Tensor<T> log(const Tensor<T>& x);
template <typename T> Tensor<T> sigmoid(const Tensor<T>& x);
template <typename T> Tensor<T> relu(const Tensor<T>& x);
template <typename T> Tensor<T> leaky_relu(const Tensor<T>& x, T slope);
// Gradient passes where lo <= x <= hi.
template <typename T> Tensor<T> clamp(const Tensor<T>& x, T lo, T hi);
template <typename T> Tensor<T> sum(const Tensor<T>& x);
template <typename T> Tensor<T> mean(const Tensor<T>& x);
template <typename T> Tensor<T> reshape(const Tensor<T>& x, Shape shape);

// [N,C,H,W] x [F,C,kh,kw] (+ bias [F]) -> [N,F,H',W']. Each output is the
// sum over (c, i, j) in row-major order, then the bias is added.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& weight,
                 const Tensor<T>& bias, const Conv2dParams& params);
template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& weight,
                 const Tensor<T>& bias, std::size_t stride, std::size_t padding,
                 std::size_t dilation = 1) {
  return conv2d(input, weight, bias, Conv2dParams::uniform(stride, padding, dilation));
}

// [N,C,H,W] x [C,F,kh,kw] (+ bias [F]) -> [N,F,(H-1)s-2p+kh+op, ...].
template <typename T>
Tensor<T> conv_transpose2d(const Tensor<T>& input, const Tensor<T>& weight,
                           const Tensor<T>& bias, std::size_t stride,
                           std::size_t padding, std::size_t output_padding);

// Ties go to the first element of the window in row-major order.
template <typename T>
Tensor<T> max_pool2d(const Tensor<T>& input, std::size_t kernel, std::size_t stride);
template <typename T>
Tensor<T> avg_pool2d(const Tensor<T>& input, std::size_t kernel, std::size_t stride);

// [N,C,H,W] -> [N,C]
template <typename T>
Tensor<T> global_avg_pool2d(const Tensor<T>& input);

// Running statistics of one batch-norm layer. `tracked` is a one-element
// tensor counting train-mode updates; zero means uninitialised. The first
// train-mode update copies the batch statistics, later ones blend with
// `momentum`.
template <typename T>
struct BatchNormBuffers {
  Tensor<T> running_mean;
  Tensor<T> running_var;
  Tensor<T> tracked;

  static BatchNormBuffers create(std::size_t channels);
};

inline constexpr double kBatchNormEps = 1e-5;
inline constexpr double kBatchNormMomentum = 0.1;

template <typename T>
Tensor<T> batch_norm2d(const Tensor<T>& input, const Tensor<T>& gamma,
                       const Tensor<T>& beta, BatchNormBuffers<T> buffers, Mode mode,
                       T momentum = T(kBatchNormMomentum), T eps = T(kBatchNormEps));

// Inverted dropout; identity in eval mode or when p == 0.
template <typename T>
Tensor<T> dropout(const Tensor<T>& input, double p, Rng& rng, Mode mode);

// Joins [N,Ci,H,W] tensors along the channel axis.
template <typename T>
Tensor<T> concat_channels(const std::vector<Tensor<T>>& parts);

// Softmax over axis 1 of a rank >= 2 tensor, max-subtracted.
template <typename T>
Tensor<T> softmax_channel(const Tensor<T>& logits);

enum class Reduction { mean, sum };

struct CrossEntropyInfo {
  std::size_t valid_pixels = 0;
};

inline constexpr std::uint8_t kIgnoreLabel = 255;

// Class-weighted softmax cross-entropy of [N,K,H,W] logits against N*H*W
// labels. Pixels labelled kIgnoreLabel are skipped; `mean` divides by the
// number of scored pixels. With no scored pixels the loss is 0 and
// info->valid_pixels reports it. Empty `class_weights` means unit weights.
template <typename T>
Tensor<T> weighted_cross_entropy(const Tensor<T>& logits,
                                 std::span<const std::uint8_t> labels,
                                 std::span<const T> class_weights, Reduction reduction,
                                 CrossEntropyInfo* info = nullptr);

}  // namespace fogsight::ad
