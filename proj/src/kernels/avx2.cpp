#include <cstddef>

#include "fogsight/kernels.hpp"

#if defined(__x86_64__) || defined(_M_X64)
#define FOGSIGHT_HAVE_X86 1
#pragma GCC push_options
#pragma GCC target("avx2")
#include <immintrin.h>
#else
#define FOGSIGHT_HAVE_X86 0
#endif

namespace fogsight::kernels::avx2 {

#if FOGSIGHT_HAVE_X86

namespace {

struct F32 {
  using T = float;
  using V = __m256;
  static constexpr std::size_t W = 8;
  static V load(const T* p) { return _mm256_loadu_ps(p); }
  static void store(T* p, V v) { _mm256_storeu_ps(p, v); }
  static V set1(T x) { return _mm256_set1_ps(x); }
  static V zero() { return _mm256_setzero_ps(); }
  static V add(V a, V b) { return _mm256_add_ps(a, b); }
  static V sub(V a, V b) { return _mm256_sub_ps(a, b); }
  static V mul(V a, V b) { return _mm256_mul_ps(a, b); }
  static V div(V a, V b) { return _mm256_div_ps(a, b); }
  static V sqrt(V a) { return _mm256_sqrt_ps(a); }
  static V max(V a, V b) { return _mm256_max_ps(a, b); }
  static V gt_mask(V a, V b) { return _mm256_cmp_ps(a, b, _CMP_GT_OQ); }
  static V and_(V a, V b) { return _mm256_and_ps(a, b); }
};

struct F64 {
  using T = double;
  using V = __m256d;
  static constexpr std::size_t W = 4;
  static V load(const T* p) { return _mm256_loadu_pd(p); }
  static void store(T* p, V v) { _mm256_storeu_pd(p, v); }
  static V set1(T x) { return _mm256_set1_pd(x); }
  static V zero() { return _mm256_setzero_pd(); }
  static V add(V a, V b) { return _mm256_add_pd(a, b); }
  static V sub(V a, V b) { return _mm256_sub_pd(a, b); }
  static V mul(V a, V b) { return _mm256_mul_pd(a, b); }
  static V div(V a, V b) { return _mm256_div_pd(a, b); }
  static V sqrt(V a) { return _mm256_sqrt_pd(a); }
  static V max(V a, V b) { return _mm256_max_pd(a, b); }
  static V gt_mask(V a, V b) { return _mm256_cmp_pd(a, b, _CMP_GT_OQ); }
  static V and_(V a, V b) { return _mm256_and_pd(a, b); }
};

template <typename S>
inline typename S::T a_at(bool trans_a, const typename S::T* a, std::size_t lda,
                          std::size_t i, std::size_t p) {
  return trans_a ? a[p * lda + i] : a[i * lda + p];
}

// 4 rows x 2 vectors register tile.
template <typename S>
void tile_4x2(bool trans_a, std::size_t i, std::size_t j, std::size_t k,
              const typename S::T* a, std::size_t lda, const typename S::T* b,
              std::size_t ldb, typename S::T* c, std::size_t ldc) {
  using V = typename S::V;
  constexpr std::size_t W = S::W;
  V c00 = S::load(c + (i + 0) * ldc + j), c01 = S::load(c + (i + 0) * ldc + j + W);
  V c10 = S::load(c + (i + 1) * ldc + j), c11 = S::load(c + (i + 1) * ldc + j + W);
  V c20 = S::load(c + (i + 2) * ldc + j), c21 = S::load(c + (i + 2) * ldc + j + W);
  V c30 = S::load(c + (i + 3) * ldc + j), c31 = S::load(c + (i + 3) * ldc + j + W);
  for (std::size_t p = 0; p < k; ++p) {
    const V b0 = S::load(b + p * ldb + j);
    const V b1 = S::load(b + p * ldb + j + W);
    V av = S::set1(a_at<S>(trans_a, a, lda, i + 0, p));
    c00 = S::add(c00, S::mul(av, b0));
    c01 = S::add(c01, S::mul(av, b1));
    av = S::set1(a_at<S>(trans_a, a, lda, i + 1, p));
    c10 = S::add(c10, S::mul(av, b0));
    c11 = S::add(c11, S::mul(av, b1));
    av = S::set1(a_at<S>(trans_a, a, lda, i + 2, p));
    c20 = S::add(c20, S::mul(av, b0));
    c21 = S::add(c21, S::mul(av, b1));
    av = S::set1(a_at<S>(trans_a, a, lda, i + 3, p));
    c30 = S::add(c30, S::mul(av, b0));
    c31 = S::add(c31, S::mul(av, b1));
  }
  S::store(c + (i + 0) * ldc + j, c00), S::store(c + (i + 0) * ldc + j + W, c01);
  S::store(c + (i + 1) * ldc + j, c10), S::store(c + (i + 1) * ldc + j + W, c11);
  S::store(c + (i + 2) * ldc + j, c20), S::store(c + (i + 2) * ldc + j + W, c21);
  S::store(c + (i + 3) * ldc + j, c30), S::store(c + (i + 3) * ldc + j + W, c31);
}

// 1 row x 1 vector tile for the edges.
template <typename S>
void tile_1x1(bool trans_a, std::size_t i, std::size_t j, std::size_t k,
              const typename S::T* a, std::size_t lda, const typename S::T* b,
              std::size_t ldb, typename S::T* c, std::size_t ldc) {
  using V = typename S::V;
  V acc = S::load(c + i * ldc + j);
  for (std::size_t p = 0; p < k; ++p) {
    acc = S::add(acc, S::mul(S::set1(a_at<S>(trans_a, a, lda, i, p)),
                             S::load(b + p * ldb + j)));
  }
  S::store(c + i * ldc + j, acc);
}

template <typename S>
void gemm_impl(bool trans_a, std::size_t m, std::size_t n, std::size_t k,
               const typename S::T* a, std::size_t lda, const typename S::T* b,
               std::size_t ldb, typename S::T* c, std::size_t ldc) {
  using T = typename S::T;
  constexpr std::size_t W = S::W;
  const std::size_t n_wide = n - n % (2 * W);
  const std::size_t n_vec = n - n % W;
  const std::size_t m4 = m - m % 4;
  for (std::size_t i = 0; i < m4; i += 4) {
    for (std::size_t j = 0; j < n_wide; j += 2 * W) {
      tile_4x2<S>(trans_a, i, j, k, a, lda, b, ldb, c, ldc);
    }
  }
  for (std::size_t i = 0; i < m; ++i) {
    const std::size_t j0 = i < m4 ? n_wide : 0;
    for (std::size_t j = j0; j < n_vec; j += W) {
      tile_1x1<S>(trans_a, i, j, k, a, lda, b, ldb, c, ldc);
    }
    if (n_vec < n) {
      T* crow = c + i * ldc;
      for (std::size_t p = 0; p < k; ++p) {
        const T av = a_at<S>(trans_a, a, lda, i, p);
        const T* brow = b + p * ldb;
        for (std::size_t jj = n_vec; jj < n; ++jj) crow[jj] += av * brow[jj];
      }
    }
  }
}

template <typename S>
void accumulate_impl(std::size_t n, const typename S::T* x, typename S::T* y) {
  std::size_t i = 0;
  for (; i + S::W <= n; i += S::W) S::store(y + i, S::add(S::load(y + i), S::load(x + i)));
  for (; i < n; ++i) y[i] += x[i];
}

template <typename S>
void axpy_impl(std::size_t n, typename S::T alpha, const typename S::T* x,
               typename S::T* y) {
  const auto av = S::set1(alpha);
  std::size_t i = 0;
  for (; i + S::W <= n; i += S::W) {
    S::store(y + i, S::add(S::load(y + i), S::mul(av, S::load(x + i))));
  }
  for (; i < n; ++i) y[i] += alpha * x[i];
}

template <typename S>
void add_impl(std::size_t n, const typename S::T* a, const typename S::T* b,
              typename S::T* out) {
  std::size_t i = 0;
  for (; i + S::W <= n; i += S::W) S::store(out + i, S::add(S::load(a + i), S::load(b + i)));
  for (; i < n; ++i) out[i] = a[i] + b[i];
}

template <typename S>
void relu_impl(std::size_t n, const typename S::T* x, typename S::T* out) {
  using T = typename S::T;
  const auto z = S::zero();
  std::size_t i = 0;
  // max(x, 0) returns the second operand for NaN and for -0, matching the
  // scalar x > 0 ? x : 0.
  for (; i + S::W <= n; i += S::W) S::store(out + i, S::max(S::load(x + i), z));
  for (; i < n; ++i) out[i] = x[i] > T(0) ? x[i] : T(0);
}

template <typename S>
void relu_backward_impl(std::size_t n, const typename S::T* x,
                        const typename S::T* gy, typename S::T* gx) {
  using T = typename S::T;
  const auto z = S::zero();
  std::size_t i = 0;
  for (; i + S::W <= n; i += S::W) {
    const auto mask = S::gt_mask(S::load(x + i), z);
    S::store(gx + i, S::add(S::load(gx + i), S::and_(mask, S::load(gy + i))));
  }
  for (; i < n; ++i) gx[i] += x[i] > T(0) ? gy[i] : T(0);
}

template <typename S>
void adam_impl(std::size_t n, const AdamCoefficients& k,
               const typename S::T* grad, typename S::T* m, typename S::T* v,
               typename S::T* w) {
  using T = typename S::T;
  const T b1 = static_cast<T>(k.beta1);
  const T b2 = static_cast<T>(k.beta2);
  const T omb1 = static_cast<T>(1.0 - k.beta1);
  const T omb2 = static_cast<T>(1.0 - k.beta2);
  const T bc1 = static_cast<T>(k.bias_correction1);
  const T bc2 = static_cast<T>(k.bias_correction2);
  const T lr = static_cast<T>(k.lr);
  const T eps = static_cast<T>(k.eps);
  const auto vb1 = S::set1(b1), vb2 = S::set1(b2), vomb1 = S::set1(omb1),
             vomb2 = S::set1(omb2), vbc1 = S::set1(bc1), vbc2 = S::set1(bc2),
             vlr = S::set1(lr), veps = S::set1(eps);
  std::size_t i = 0;
  for (; i + S::W <= n; i += S::W) {
    const auto g = S::load(grad + i);
    const auto mi = S::add(S::mul(vb1, S::load(m + i)), S::mul(vomb1, g));
    const auto vi = S::add(S::mul(vb2, S::load(v + i)), S::mul(vomb2, S::mul(g, g)));
    S::store(m + i, mi);
    S::store(v + i, vi);
    const auto mhat = S::div(mi, vbc1);
    const auto vhat = S::div(vi, vbc2);
    const auto step = S::div(S::mul(vlr, mhat), S::add(S::sqrt(vhat), veps));
    S::store(w + i, S::sub(S::load(w + i), step));
  }
  if (i < n) scalar::adam_update<T>(n - i, k, grad + i, m + i, v + i, w + i);
}

}  // namespace

#endif  // FOGSIGHT_HAVE_X86

#if FOGSIGHT_HAVE_X86
#define FOGSIGHT_DEFINE(T, S)                                                      \
  void gemm(bool ta, std::size_t m, std::size_t n, std::size_t k, const T* a,      \
            std::size_t lda, const T* b, std::size_t ldb, T* c, std::size_t ldc) { \
    gemm_impl<S>(ta, m, n, k, a, lda, b, ldb, c, ldc);                             \
  }                                                                                \
  void accumulate(std::size_t n, const T* x, T* y) { accumulate_impl<S>(n, x, y); } \
  void axpy(std::size_t n, T alpha, const T* x, T* y) { axpy_impl<S>(n, alpha, x, y); } \
  void add(std::size_t n, const T* a, const T* b, T* out) { add_impl<S>(n, a, b, out); } \
  void relu(std::size_t n, const T* x, T* out) { relu_impl<S>(n, x, out); }        \
  void relu_backward(std::size_t n, const T* x, const T* gy, T* gx) {              \
    relu_backward_impl<S>(n, x, gy, gx);                                           \
  }                                                                                \
  void adam_update(std::size_t n, const AdamCoefficients& k, const T* g, T* m,     \
                   T* v, T* w) {                                                   \
    adam_impl<S>(n, k, g, m, v, w);                                                \
  }
#else
// Non-x86 builds forward to the scalar reference; dispatch never selects them.
#define FOGSIGHT_DEFINE(T, S)                                                      \
  void gemm(bool ta, std::size_t m, std::size_t n, std::size_t k, const T* a,      \
            std::size_t lda, const T* b, std::size_t ldb, T* c, std::size_t ldc) { \
    scalar::gemm<T>(ta, m, n, k, a, lda, b, ldb, c, ldc);                          \
  }                                                                                \
  void accumulate(std::size_t n, const T* x, T* y) { scalar::accumulate<T>(n, x, y); } \
  void axpy(std::size_t n, T alpha, const T* x, T* y) { scalar::axpy<T>(n, alpha, x, y); } \
  void add(std::size_t n, const T* a, const T* b, T* out) { scalar::add<T>(n, a, b, out); } \
  void relu(std::size_t n, const T* x, T* out) { scalar::relu<T>(n, x, out); }     \
  void relu_backward(std::size_t n, const T* x, const T* gy, T* gx) {              \
    scalar::relu_backward<T>(n, x, gy, gx);                                        \
  }                                                                                \
  void adam_update(std::size_t n, const AdamCoefficients& k, const T* g, T* m,     \
                   T* v, T* w) {                                                   \
    scalar::adam_update<T>(n, k, g, m, v, w);                                      \
  }
#endif

FOGSIGHT_DEFINE(float, F32)
FOGSIGHT_DEFINE(double, F64)
#undef FOGSIGHT_DEFINE

}  // namespace fogsight::kernels::avx2

#if FOGSIGHT_HAVE_X86
#pragma GCC pop_options
#endif
