#include <cmath>
#include <cstddef>

#include "fogsight/kernels.hpp"

namespace fogsight::kernels::scalar {

template <typename T>
void gemm(bool trans_a, std::size_t m, std::size_t n, std::size_t k, const T* a,
          std::size_t lda, const T* b, std::size_t ldb, T* c, std::size_t ldc) {
  for (std::size_t i = 0; i < m; ++i) {
    T* crow = c + i * ldc;
    for (std::size_t p = 0; p < k; ++p) {
      const T av = trans_a ? a[p * lda + i] : a[i * lda + p];
      const T* brow = b + p * ldb;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

template <typename T>
void accumulate(std::size_t n, const T* x, T* y) {
  for (std::size_t i = 0; i < n; ++i) y[i] += x[i];
}

template <typename T>
void axpy(std::size_t n, T alpha, const T* x, T* y) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

template <typename T>
void add(std::size_t n, const T* a, const T* b, T* out) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] + b[i];
}

template <typename T>
void relu(std::size_t n, const T* x, T* out) {
  for (std::size_t i = 0; i < n; ++i) out[i] = x[i] > T(0) ? x[i] : T(0);
}

template <typename T>
void relu_backward(std::size_t n, const T* x, const T* gy, T* gx) {
  for (std::size_t i = 0; i < n; ++i) gx[i] += x[i] > T(0) ? gy[i] : T(0);
}

template <typename T>
void adam_update(std::size_t n, const AdamCoefficients& k, const T* grad, T* m,
                 T* v, T* w) {
  const T b1 = static_cast<T>(k.beta1);
  const T b2 = static_cast<T>(k.beta2);
  const T omb1 = static_cast<T>(1.0 - k.beta1);
  const T omb2 = static_cast<T>(1.0 - k.beta2);
  const T bc1 = static_cast<T>(k.bias_correction1);
  const T bc2 = static_cast<T>(k.bias_correction2);
  const T lr = static_cast<T>(k.lr);
  const T eps = static_cast<T>(k.eps);
  for (std::size_t i = 0; i < n; ++i) {
    const T g = grad[i];
    m[i] = b1 * m[i] + omb1 * g;
    v[i] = b2 * v[i] + omb2 * (g * g);
    const T mhat = m[i] / bc1;
    const T vhat = v[i] / bc2;
    w[i] = w[i] - (lr * mhat) / (std::sqrt(vhat) + eps);
  }
}

#define FOGSIGHT_INSTANTIATE(T)                                                \
  template void gemm<T>(bool, std::size_t, std::size_t, std::size_t, const T*, \
                        std::size_t, const T*, std::size_t, T*, std::size_t);  \
  template void accumulate<T>(std::size_t, const T*, T*);                      \
  template void axpy<T>(std::size_t, T, const T*, T*);                         \
  template void add<T>(std::size_t, const T*, const T*, T*);                   \
  template void relu<T>(std::size_t, const T*, T*);                            \
  template void relu_backward<T>(std::size_t, const T*, const T*, T*);         \
  template void adam_update<T>(std::size_t, const AdamCoefficients&, const T*, \
                               T*, T*, T*);

FOGSIGHT_INSTANTIATE(float)
FOGSIGHT_INSTANTIATE(double)
#undef FOGSIGHT_INSTANTIATE

}  // namespace fogsight::kernels::scalar
