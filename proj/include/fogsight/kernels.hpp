#pragma once

// Data-parallel inner loops behind the autodiff engine.
//
// Every kernel has a scalar reference implementation and an AVX2 variant.
// The active variant is picked once at startup from the CPU features and can
// be overridden with FOGSIGHT_ISA=scalar|avx2 or set_isa().
//
// Vector variants only parallelise across independent output elements and
// never use fused multiply-add, so each output sees exactly the same sequence
// of roundings as the scalar loop. Both variants are therefore bitwise equal,
// which the equivalence tests check.

#include <cstddef>
#include <string_view>

namespace fogsight::kernels {

enum class Isa { scalar, avx2 };

Isa active_isa();
// Throws ParameterError if the requested ISA is unsupported on this CPU.
void set_isa(Isa isa);
bool isa_supported(Isa isa);
std::string_view isa_name(Isa isa);

// C[m, n] += sum_k op(A)[m, k] * B[k, n], with k visited in ascending order
// for every (m, n). op(A) is A (M x K, row stride lda) or, when trans_a is
// set, the transpose of A stored as K x M with row stride lda.
void gemm(bool trans_a, std::size_t m, std::size_t n, std::size_t k,
          const float* a, std::size_t lda, const float* b, std::size_t ldb,
          float* c, std::size_t ldc);
void gemm(bool trans_a, std::size_t m, std::size_t n, std::size_t k,
          const double* a, std::size_t lda, const double* b, std::size_t ldb,
          double* c, std::size_t ldc);

// y[i] += x[i]
void accumulate(std::size_t n, const float* x, float* y);
void accumulate(std::size_t n, const double* x, double* y);

// y[i] += alpha * x[i]
void axpy(std::size_t n, float alpha, const float* x, float* y);
void axpy(std::size_t n, double alpha, const double* x, double* y);

// out[i] = a[i] + b[i]
void add(std::size_t n, const float* a, const float* b, float* out);
void add(std::size_t n, const double* a, const double* b, double* out);

// out[i] = max(x[i], 0)
void relu(std::size_t n, const float* x, float* out);
void relu(std::size_t n, const double* x, double* out);

// gx[i] += x[i] > 0 ? gy[i] : 0
void relu_backward(std::size_t n, const float* x, const float* gy, float* gx);
void relu_backward(std::size_t n, const double* x, const double* gy, double* gx);

struct AdamCoefficients {
  double lr;
  double beta1;
  double beta2;
  double eps;
  double bias_correction1;  // 1 - beta1^t
  double bias_correction2;  // 1 - beta2^t
};

// Bias-corrected Adam update of one parameter array.
void adam_update(std::size_t n, const AdamCoefficients& k, const float* grad,
                 float* m, float* v, float* w);
void adam_update(std::size_t n, const AdamCoefficients& k, const double* grad,
                 double* m, double* v, double* w);

// Direct access to each variant, for the equivalence tests and benchmarks.
namespace scalar {
template <typename T>
void gemm(bool trans_a, std::size_t m, std::size_t n, std::size_t k, const T* a,
          std::size_t lda, const T* b, std::size_t ldb, T* c, std::size_t ldc);
template <typename T>
void accumulate(std::size_t n, const T* x, T* y);
template <typename T>
void axpy(std::size_t n, T alpha, const T* x, T* y);
template <typename T>
void add(std::size_t n, const T* a, const T* b, T* out);
template <typename T>
void relu(std::size_t n, const T* x, T* out);
template <typename T>
void relu_backward(std::size_t n, const T* x, const T* gy, T* gx);
template <typename T>
void adam_update(std::size_t n, const AdamCoefficients& k, const T* grad, T* m,
                 T* v, T* w);
}  // namespace scalar

namespace avx2 {
void gemm(bool trans_a, std::size_t m, std::size_t n, std::size_t k,
          const float* a, std::size_t lda, const float* b, std::size_t ldb,
          float* c, std::size_t ldc);
void gemm(bool trans_a, std::size_t m, std::size_t n, std::size_t k,
          const double* a, std::size_t lda, const double* b, std::size_t ldb,
          double* c, std::size_t ldc);
void accumulate(std::size_t n, const float* x, float* y);
void accumulate(std::size_t n, const double* x, double* y);
void axpy(std::size_t n, float alpha, const float* x, float* y);
void axpy(std::size_t n, double alpha, const double* x, double* y);
void add(std::size_t n, const float* a, const float* b, float* out);
void add(std::size_t n, const double* a, const double* b, double* out);
void relu(std::size_t n, const float* x, float* out);
void relu(std::size_t n, const double* x, double* out);
void relu_backward(std::size_t n, const float* x, const float* gy, float* gx);
void relu_backward(std::size_t n, const double* x, const double* gy, double* gx);
void adam_update(std::size_t n, const AdamCoefficients& k, const float* grad,
                 float* m, float* v, float* w);
void adam_update(std::size_t n, const AdamCoefficients& k, const double* grad,
                 double* m, double* v, double* w);
}  // namespace avx2

}  // namespace fogsight::kernels
