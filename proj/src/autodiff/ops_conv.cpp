#include <algorithm>
#include <limits>

#include "fogsight/error.hpp"
#include "fogsight/kernels.hpp"
#include "fogsight/ops.hpp"

namespace fogsight::ad {

namespace {

struct Geometry {
  std::size_t channels, height, width;  // image
  std::size_t kh, kw;
  Conv2dParams p;
  std::size_t out_h, out_w;  // window grid

  std::size_t rows() const { return channels * kh * kw; }
  std::size_t cols() const { return out_h * out_w; }
};

// cols[(c*kh + i)*kw + j][oh*out_w + ow] = img[c][oh*s - pad + i*d][ow*s - pad + j*d],
// zero outside the image.
template <typename T>
void im2col(const Geometry& g, const T* img, T* cols) {
  const std::size_t n_cols = g.cols();
  for (std::size_t c = 0; c < g.channels; ++c) {
    for (std::size_t i = 0; i < g.kh; ++i) {
      for (std::size_t j = 0; j < g.kw; ++j) {
        T* row = cols + ((c * g.kh + i) * g.kw + j) * n_cols;
        for (std::size_t oh = 0; oh < g.out_h; ++oh) {
          const auto y = static_cast<std::ptrdiff_t>(oh * g.p.stride_h + i * g.p.dilation_h) -
                         static_cast<std::ptrdiff_t>(g.p.pad_h);
          T* dst = row + oh * g.out_w;
          if (y < 0 || y >= static_cast<std::ptrdiff_t>(g.height)) {
            std::fill(dst, dst + g.out_w, T(0));
            continue;
          }
          const T* src = img + (c * g.height + static_cast<std::size_t>(y)) * g.width;
          for (std::size_t ow = 0; ow < g.out_w; ++ow) {
            const auto x = static_cast<std::ptrdiff_t>(ow * g.p.stride_w + j * g.p.dilation_w) -
                           static_cast<std::ptrdiff_t>(g.p.pad_w);
            dst[ow] = (x < 0 || x >= static_cast<std::ptrdiff_t>(g.width))
                          ? T(0)
                          : src[static_cast<std::size_t>(x)];
          }
        }
      }
    }
  }
}

// Scatter-add inverse of im2col.
template <typename T>
void col2im(const Geometry& g, const T* cols, T* img) {
  const std::size_t n_cols = g.cols();
  for (std::size_t c = 0; c < g.channels; ++c) {
    for (std::size_t i = 0; i < g.kh; ++i) {
      for (std::size_t j = 0; j < g.kw; ++j) {
        const T* row = cols + ((c * g.kh + i) * g.kw + j) * n_cols;
        for (std::size_t oh = 0; oh < g.out_h; ++oh) {
          const auto y = static_cast<std::ptrdiff_t>(oh * g.p.stride_h + i * g.p.dilation_h) -
                         static_cast<std::ptrdiff_t>(g.p.pad_h);
          if (y < 0 || y >= static_cast<std::ptrdiff_t>(g.height)) continue;
          T* dst = img + (c * g.height + static_cast<std::size_t>(y)) * g.width;
          const T* src = row + oh * g.out_w;
          for (std::size_t ow = 0; ow < g.out_w; ++ow) {
            const auto x = static_cast<std::ptrdiff_t>(ow * g.p.stride_w + j * g.p.dilation_w) -
                           static_cast<std::ptrdiff_t>(g.p.pad_w);
            if (x >= 0 && x < static_cast<std::ptrdiff_t>(g.width)) {
              dst[static_cast<std::size_t>(x)] += src[ow];
            }
          }
        }
      }
    }
  }
}

template <typename T>
void transpose(std::size_t rows, std::size_t cols, const T* in, T* out) {
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) out[c * rows + r] = in[r * cols + c];
  }
}

template <typename T>
void require_rank4(const Tensor<T>& t, const char* op, const char* what) {
  if (!t.defined() || t.rank() != 4) {
    throw DimensionError(std::string(op) + ": " + what + " must be rank 4");
  }
}

template <typename T>
void require_bias(const Tensor<T>& bias, std::size_t features, const char* op) {
  if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != features)) {
    throw DimensionError(std::string(op) + ": bias must have shape [" +
                         std::to_string(features) + "], got " + to_string(bias.shape()));
  }
}

template <typename T>
std::vector<Tensor<T>> with_bias(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b) {
  if (b.defined()) return {x, w, b};
  return {x, w};
}

}  // namespace

std::size_t conv_out_extent(std::size_t in, std::size_t kernel, std::size_t stride,
                            std::size_t pad, std::size_t dilation) {
  if (kernel == 0 || stride == 0 || dilation == 0) {
    throw ParameterError("kernel, stride and dilation must be positive");
  }
  const std::size_t span = dilation * (kernel - 1) + 1;
  if (in + 2 * pad < span) {
    throw DimensionError("input extent " + std::to_string(in) + " with padding " +
                         std::to_string(pad) + " is smaller than kernel span " +
                         std::to_string(span));
  }
  return (in + 2 * pad - span) / stride + 1;
}

template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias,
                 const Conv2dParams& params) {
  require_rank4(input, "conv2d", "input");
  require_rank4(weight, "conv2d", "weight");
  const std::size_t n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
  const std::size_t f = weight.dim(0);
  if (weight.dim(1) != c) {
    throw DimensionError("conv2d: input has " + std::to_string(c) + " channels, weight expects " +
                         std::to_string(weight.dim(1)));
  }
  require_bias(bias, f, "conv2d");
  Geometry g{c, h, w, weight.dim(2), weight.dim(3), params, 0, 0};
  g.out_h = conv_out_extent(h, g.kh, params.stride_h, params.pad_h, params.dilation_h);
  g.out_w = conv_out_extent(w, g.kw, params.stride_w, params.pad_w, params.dilation_w);

  const std::size_t k = g.rows(), p = g.cols();
  std::vector<T> out(n * f * p, T(0));
  std::vector<T> cols(k * p);
  const T* x = input.data().data();
  const T* wt = weight.data().data();
  for (std::size_t b = 0; b < n; ++b) {
    im2col(g, x + b * c * h * w, cols.data());
    T* o = out.data() + b * f * p;
    kernels::gemm(false, f, p, k, wt, k, cols.data(), p, o, p);
    if (bias.defined()) {
      const T* bv = bias.data().data();
      for (std::size_t ff = 0; ff < f; ++ff) {
        for (std::size_t q = 0; q < p; ++q) o[ff * p + q] += bv[ff];
      }
    }
  }

  return make_op<T>(
      "conv2d", Shape{n, f, g.out_h, g.out_w}, std::move(out), with_bias(input, weight, bias),
      [input, weight, g, n, f](std::span<const T> gy, std::span<const std::span<T>> grads) {
        const std::size_t k = g.rows(), p = g.cols();
        const std::size_t in_sz = g.channels * g.height * g.width;
        const T* x = input.data().data();
        const T* wt = weight.data().data();
        std::vector<T> cols(k * p), cols_t(p * k);
        for (std::size_t b = 0; b < n; ++b) {
          const T* gyb = gy.data() + b * f * p;
          if (!grads[0].empty()) {
            std::fill(cols.begin(), cols.end(), T(0));
            kernels::gemm(true, k, p, f, wt, k, gyb, p, cols.data(), p);
            col2im(g, cols.data(), grads[0].data() + b * in_sz);
          }
          if (!grads[1].empty()) {
            im2col(g, x + b * in_sz, cols.data());
            transpose(k, p, cols.data(), cols_t.data());
            kernels::gemm(false, f, k, p, gyb, p, cols_t.data(), k, grads[1].data(), k);
          }
          if (grads.size() > 2 && !grads[2].empty()) {
            for (std::size_t ff = 0; ff < f; ++ff) {
              T acc = T(0);
              for (std::size_t q = 0; q < p; ++q) acc += gyb[ff * p + q];
              grads[2][ff] += acc;
            }
          }
        }
      });
}

template <typename T>
Tensor<T> conv_transpose2d(const Tensor<T>& input, const Tensor<T>& weight,
                           const Tensor<T>& bias, std::size_t stride, std::size_t padding,
                           std::size_t output_padding) {
  require_rank4(input, "conv_transpose2d", "input");
  require_rank4(weight, "conv_transpose2d", "weight");
  if (stride == 0) throw ParameterError("conv_transpose2d: stride must be positive");
  if (output_padding >= stride) {
    throw ParameterError("conv_transpose2d: output_padding " + std::to_string(output_padding) +
                         " must be smaller than stride " + std::to_string(stride));
  }
  const std::size_t n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
  if (weight.dim(0) != c) {
    throw DimensionError("conv_transpose2d: input has " + std::to_string(c) +
                         " channels, weight expects " + std::to_string(weight.dim(0)));
  }
  const std::size_t f = weight.dim(1), kh = weight.dim(2), kw = weight.dim(3);
  require_bias(bias, f, "conv_transpose2d");
  const auto extent = [&](std::size_t in, std::size_t k) -> std::size_t {
    const std::size_t full = (in - 1) * stride + k + output_padding;
    if (full <= 2 * padding) throw DimensionError("conv_transpose2d: empty output");
    return full - 2 * padding;
  };
  const std::size_t oh = extent(h, kh), ow = extent(w, kw);
  // The output plays the role of a convolution input whose window grid is h x w.
  const Geometry g{f, oh, ow, kh, kw, Conv2dParams::uniform(stride, padding), h, w};

  const std::size_t k = g.rows(), p = h * w, out_sz = f * oh * ow;
  std::vector<T> out(n * out_sz, T(0));
  std::vector<T> cols(k * p);
  const T* x = input.data().data();
  const T* wt = weight.data().data();
  for (std::size_t b = 0; b < n; ++b) {
    std::fill(cols.begin(), cols.end(), T(0));
    kernels::gemm(true, k, p, c, wt, k, x + b * c * p, p, cols.data(), p);
    T* o = out.data() + b * out_sz;
    col2im(g, cols.data(), o);
    if (bias.defined()) {
      const T* bv = bias.data().data();
      for (std::size_t ff = 0; ff < f; ++ff) {
        for (std::size_t q = 0; q < oh * ow; ++q) o[ff * oh * ow + q] += bv[ff];
      }
    }
  }

  return make_op<T>(
      "conv_transpose2d", Shape{n, f, oh, ow}, std::move(out), with_bias(input, weight, bias),
      [input, weight, g, n, c](std::span<const T> gy, std::span<const std::span<T>> grads) {
        const std::size_t k = g.rows(), p = g.cols();
        const std::size_t out_sz = g.channels * g.height * g.width;
        const T* x = input.data().data();
        const T* wt = weight.data().data();
        std::vector<T> cols(k * p), cols_t(p * k);
        for (std::size_t b = 0; b < n; ++b) {
          const T* gyb = gy.data() + b * out_sz;
          // Upstream gradient through the adjoint: a plain strided convolution.
          im2col(g, gyb, cols.data());
          if (!grads[0].empty()) {
            kernels::gemm(false, c, p, k, wt, k, cols.data(), p, grads[0].data() + b * c * p, p);
          }
          if (!grads[1].empty()) {
            transpose(k, p, cols.data(), cols_t.data());
            kernels::gemm(false, c, k, p, x + b * c * p, p, cols_t.data(), k, grads[1].data(), k);
          }
          if (grads.size() > 2 && !grads[2].empty()) {
            const std::size_t plane = g.height * g.width;
            for (std::size_t ff = 0; ff < g.channels; ++ff) {
              T acc = T(0);
              for (std::size_t q = 0; q < plane; ++q) acc += gyb[ff * plane + q];
              grads[2][ff] += acc;
            }
          }
        }
      });
}

template <typename T>
Tensor<T> max_pool2d(const Tensor<T>& input, std::size_t kernel, std::size_t stride) {
  require_rank4(input, "max_pool2d", "input");
  const std::size_t n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
  if (kernel > h || kernel > w) {
    throw DimensionError("max_pool2d: kernel " + std::to_string(kernel) + " exceeds input " +
                         std::to_string(h) + "x" + std::to_string(w));
  }
  const std::size_t oh = conv_out_extent(h, kernel, stride, 0, 1);
  const std::size_t ow = conv_out_extent(w, kernel, stride, 0, 1);
  const T* x = input.data().data();
  std::vector<T> out(n * c * oh * ow);
  std::vector<std::size_t> argmax(out.size());
  for (std::size_t plane = 0; plane < n * c; ++plane) {
    const T* src = x + plane * h * w;
    for (std::size_t i = 0; i < oh; ++i) {
      for (std::size_t j = 0; j < ow; ++j) {
        std::size_t best = (i * stride) * w + j * stride;
        for (std::size_t di = 0; di < kernel; ++di) {
          for (std::size_t dj = 0; dj < kernel; ++dj) {
            const std::size_t idx = (i * stride + di) * w + j * stride + dj;
            if (src[idx] > src[best]) best = idx;
          }
        }
        const std::size_t o = (plane * oh + i) * ow + j;
        out[o] = src[best];
        argmax[o] = plane * h * w + best;
      }
    }
  }
  return make_op<T>("max_pool2d", Shape{n, c, oh, ow}, std::move(out), {input},
                    [argmax = std::move(argmax)](std::span<const T> gy,
                                                 std::span<const std::span<T>> grads) {
                      if (grads[0].empty()) return;
                      for (std::size_t o = 0; o < gy.size(); ++o) grads[0][argmax[o]] += gy[o];
                    });
}

template <typename T>
Tensor<T> avg_pool2d(const Tensor<T>& input, std::size_t kernel, std::size_t stride) {
  require_rank4(input, "avg_pool2d", "input");
  const std::size_t n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
  if (kernel > h || kernel > w) {
    throw DimensionError("avg_pool2d: kernel " + std::to_string(kernel) + " exceeds input " +
                         std::to_string(h) + "x" + std::to_string(w));
  }
  const std::size_t oh = conv_out_extent(h, kernel, stride, 0, 1);
  const std::size_t ow = conv_out_extent(w, kernel, stride, 0, 1);
  const T area = static_cast<T>(kernel * kernel);
  const T* x = input.data().data();
  std::vector<T> out(n * c * oh * ow);
  for (std::size_t plane = 0; plane < n * c; ++plane) {
    const T* src = x + plane * h * w;
    for (std::size_t i = 0; i < oh; ++i) {
      for (std::size_t j = 0; j < ow; ++j) {
        T acc = T(0);
        for (std::size_t di = 0; di < kernel; ++di) {
          for (std::size_t dj = 0; dj < kernel; ++dj) {
            acc += src[(i * stride + di) * w + j * stride + dj];
          }
        }
        out[(plane * oh + i) * ow + j] = acc / area;
      }
    }
  }
  return make_op<T>(
      "avg_pool2d", Shape{n, c, oh, ow}, std::move(out), {input},
      [n, c, h, w, oh, ow, kernel, stride, area](std::span<const T> gy,
                                                 std::span<const std::span<T>> grads) {
        if (grads[0].empty()) return;
        for (std::size_t plane = 0; plane < n * c; ++plane) {
          T* dst = grads[0].data() + plane * h * w;
          for (std::size_t i = 0; i < oh; ++i) {
            for (std::size_t j = 0; j < ow; ++j) {
              const T share = gy[(plane * oh + i) * ow + j] / area;
              for (std::size_t di = 0; di < kernel; ++di) {
                for (std::size_t dj = 0; dj < kernel; ++dj) {
                  dst[(i * stride + di) * w + j * stride + dj] += share;
                }
              }
            }
          }
        }
      });
}

template <typename T>
Tensor<T> global_avg_pool2d(const Tensor<T>& input) {
  require_rank4(input, "global_avg_pool2d", "input");
  const std::size_t n = input.dim(0), c = input.dim(1);
  const std::size_t plane = input.dim(2) * input.dim(3);
  const T area = static_cast<T>(plane);
  const T* x = input.data().data();
  std::vector<T> out(n * c);
  for (std::size_t q = 0; q < n * c; ++q) {
    T acc = T(0);
    for (std::size_t i = 0; i < plane; ++i) acc += x[q * plane + i];
    out[q] = acc / area;
  }
  return make_op<T>("global_avg_pool2d", Shape{n, c}, std::move(out), {input},
                    [plane, area](std::span<const T> gy, std::span<const std::span<T>> grads) {
                      if (grads[0].empty()) return;
                      for (std::size_t q = 0; q < gy.size(); ++q) {
                        const T share = gy[q] / area;
                        for (std::size_t i = 0; i < plane; ++i) grads[0][q * plane + i] += share;
                      }
                    });
}

#define FOGSIGHT_INSTANTIATE(T)                                                            \
  template Tensor<T> conv2d<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,       \
                               const Conv2dParams&);                                       \
  template Tensor<T> conv_transpose2d<T>(const Tensor<T>&, const Tensor<T>&,               \
                                         const Tensor<T>&, std::size_t, std::size_t,       \
                                         std::size_t);                                     \
  template Tensor<T> max_pool2d<T>(const Tensor<T>&, std::size_t, std::size_t);            \
  template Tensor<T> avg_pool2d<T>(const Tensor<T>&, std::size_t, std::size_t);            \
  template Tensor<T> global_avg_pool2d<T>(const Tensor<T>&);

FOGSIGHT_INSTANTIATE(float)
FOGSIGHT_INSTANTIATE(double)
#undef FOGSIGHT_INSTANTIATE

}  // namespace fogsight::ad
