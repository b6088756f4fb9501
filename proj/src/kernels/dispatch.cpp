#include <atomic>
#include <cstdlib>
#include <string>

#include "fogsight/error.hpp"
#include "fogsight/kernels.hpp"

namespace fogsight::kernels {

namespace {

Isa detect() {
  if (const char* env = std::getenv("FOGSIGHT_ISA")) {
    const std::string v(env);
    if (v == "scalar") return Isa::scalar;
    if (v == "avx2" && isa_supported(Isa::avx2)) return Isa::avx2;
  }
  return isa_supported(Isa::avx2) ? Isa::avx2 : Isa::scalar;
}

std::atomic<Isa>& current() {
  static std::atomic<Isa> isa{detect()};
  return isa;
}

bool use_avx2() { return current().load(std::memory_order_relaxed) == Isa::avx2; }

}  // namespace

bool isa_supported(Isa isa) {
  switch (isa) {
    case Isa::scalar:
      return true;
    case Isa::avx2:
#if defined(__x86_64__) || defined(_M_X64)
      return __builtin_cpu_supports("avx2");
#else
      return false;
#endif
  }
  return false;
}

Isa active_isa() { return current().load(); }

void set_isa(Isa isa) {
  if (!isa_supported(isa)) {
    throw ParameterError("ISA " + std::string(isa_name(isa)) + " not supported on this CPU");
  }
  current().store(isa);
}

std::string_view isa_name(Isa isa) {
  return isa == Isa::avx2 ? "avx2" : "scalar";
}

#define FOGSIGHT_DISPATCH(T)                                                       \
  void gemm(bool ta, std::size_t m, std::size_t n, std::size_t k, const T* a,      \
            std::size_t lda, const T* b, std::size_t ldb, T* c, std::size_t ldc) { \
    if (m == 0 || n == 0 || k == 0) return;                                        \
    if (use_avx2()) return avx2::gemm(ta, m, n, k, a, lda, b, ldb, c, ldc);        \
    scalar::gemm<T>(ta, m, n, k, a, lda, b, ldb, c, ldc);                          \
  }                                                                                \
  void accumulate(std::size_t n, const T* x, T* y) {                               \
    if (use_avx2()) return avx2::accumulate(n, x, y);                              \
    scalar::accumulate<T>(n, x, y);                                                \
  }                                                                                \
  void axpy(std::size_t n, T alpha, const T* x, T* y) {                            \
    if (use_avx2()) return avx2::axpy(n, alpha, x, y);                             \
    scalar::axpy<T>(n, alpha, x, y);                                               \
  }                                                                                \
  void add(std::size_t n, const T* a, const T* b, T* out) {                        \
    if (use_avx2()) return avx2::add(n, a, b, out);                                \
    scalar::add<T>(n, a, b, out);                                                  \
  }                                                                                \
  void relu(std::size_t n, const T* x, T* out) {                                   \
    if (use_avx2()) return avx2::relu(n, x, out);                                  \
    scalar::relu<T>(n, x, out);                                                    \
  }                                                                                \
  void relu_backward(std::size_t n, const T* x, const T* gy, T* gx) {              \
    if (use_avx2()) return avx2::relu_backward(n, x, gy, gx);                      \
    scalar::relu_backward<T>(n, x, gy, gx);                                        \
  }                                                                                \
  void adam_update(std::size_t n, const AdamCoefficients& k, const T* g, T* m,     \
                   T* v, T* w) {                                                   \
    if (use_avx2()) return avx2::adam_update(n, k, g, m, v, w);                    \
    scalar::adam_update<T>(n, k, g, m, v, w);                                      \
  }

FOGSIGHT_DISPATCH(float)
FOGSIGHT_DISPATCH(double)
#undef FOGSIGHT_DISPATCH

}  // namespace fogsight::kernels
