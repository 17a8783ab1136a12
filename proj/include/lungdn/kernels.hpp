#pragma once

// Dense inner loops behind conv1d and dense layers.
//
// Every kernel exists as a scalar reference (namespace `scalar`) and, on
// x86-64, an AVX2+FMA variant (namespace `avx2`). The public entry points in
// `lungdn::kernels` dispatch once, at first use, to the best variant the CPU
// supports. Setting LUNGDN_ISA=scalar in the environment pins the reference
// path.
//
// All matrices are row-major with explicit leading dimensions. Results are
// accumulated into C (C += ...). C rows are updated by sequential
// read-modify-write, one row at a time, so rows of C may overlap in memory
// (convolution input gradients rely on this).

#include <cstddef>
#include <string_view>

namespace lungdn::kernels {

enum class Isa { scalar, avx2 };

std::string_view isa_name(Isa isa) noexcept;

/// ISA the dispatcher selected.
Isa active_isa() noexcept;

/// True when the AVX2 variants were compiled in and the CPU supports them.
bool avx2_available() noexcept;

/// Overrides the dispatcher. Throws ConfigError if `isa` is unavailable.
void set_isa(Isa isa);

// C[m x n] += A[m x k] * B[k x n]
template <class Real>
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const Real* a, std::size_t lda,
             const Real* b, std::size_t ldb, Real* c, std::size_t ldc);

// C[k x n] += A[m x k]^T * B[m x n]
template <class Real>
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const Real* a, std::size_t lda,
             const Real* b, std::size_t ldb, Real* c, std::size_t ldc);

template <class Real>
Real dot(std::size_t n, const Real* a, const Real* b);

// y += alpha * x
template <class Real>
void axpy(std::size_t n, Real alpha, const Real* x, Real* y);

namespace scalar {
template <class Real>
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const Real* a, std::size_t lda,
             const Real* b, std::size_t ldb, Real* c, std::size_t ldc);
template <class Real>
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const Real* a, std::size_t lda,
             const Real* b, std::size_t ldb, Real* c, std::size_t ldc);
template <class Real>
Real dot(std::size_t n, const Real* a, const Real* b);
template <class Real>
void axpy(std::size_t n, Real alpha, const Real* x, Real* y);
}  // namespace scalar

#if defined(__x86_64__) || defined(_M_X64)
#define LUNGDN_HAVE_AVX2_KERNELS 1
namespace avx2 {
template <class Real>
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const Real* a, std::size_t lda,
             const Real* b, std::size_t ldb, Real* c, std::size_t ldc);
template <class Real>
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const Real* a, std::size_t lda,
             const Real* b, std::size_t ldb, Real* c, std::size_t ldc);
template <class Real>
Real dot(std::size_t n, const Real* a, const Real* b);
template <class Real>
void axpy(std::size_t n, Real alpha, const Real* x, Real* y);
}  // namespace avx2
#else
#define LUNGDN_HAVE_AVX2_KERNELS 0
#endif

}  // namespace lungdn::kernels
