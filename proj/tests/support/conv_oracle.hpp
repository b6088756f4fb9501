#pragma once

// Direct nested-loop convolution used as the independent oracle for conv2d.
// Sums over (c, i, j) in row-major order, skipping padded taps, then adds the
// bias.

#include <cstddef>
#include <vector>

namespace fogsight::oracle {

struct ConvCase {
  std::size_t n, c, h, w, f, kh, kw, stride, pad, dilation;
};

inline std::size_t oracle_extent(std::size_t in, std::size_t k, std::size_t s, std::size_t p,
                                 std::size_t d) {
  return (in + 2 * p - d * (k - 1) - 1) / s + 1;
}

template <typename T>
std::vector<T> brute_force_conv2d(const ConvCase& cc, const std::vector<T>& x,
                                  const std::vector<T>& w, const std::vector<T>& bias) {
  const std::size_t oh = oracle_extent(cc.h, cc.kh, cc.stride, cc.pad, cc.dilation);
  const std::size_t ow = oracle_extent(cc.w, cc.kw, cc.stride, cc.pad, cc.dilation);
  std::vector<T> out(cc.n * cc.f * oh * ow);
  for (std::size_t n = 0; n < cc.n; ++n) {
    for (std::size_t f = 0; f < cc.f; ++f) {
      for (std::size_t y = 0; y < oh; ++y) {
        for (std::size_t xo = 0; xo < ow; ++xo) {
          T acc = T(0);
          for (std::size_t c = 0; c < cc.c; ++c) {
            for (std::size_t i = 0; i < cc.kh; ++i) {
              for (std::size_t j = 0; j < cc.kw; ++j) {
                const long yy = static_cast<long>(y * cc.stride + i * cc.dilation) -
                                static_cast<long>(cc.pad);
                const long xx = static_cast<long>(xo * cc.stride + j * cc.dilation) -
                                static_cast<long>(cc.pad);
                if (yy < 0 || xx < 0 || yy >= static_cast<long>(cc.h) ||
                    xx >= static_cast<long>(cc.w)) {
                  continue;
                }
                acc += x[((n * cc.c + c) * cc.h + yy) * cc.w + xx] *
                       w[((f * cc.c + c) * cc.kh + i) * cc.kw + j];
              }
            }
          }
          out[((n * cc.f + f) * oh + y) * ow + xo] = acc + bias[f];
        }
      }
    }
  }
  return out;
}

}  // namespace fogsight::oracle
