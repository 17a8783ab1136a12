// AVX2+FMA kernels. This translation unit is compiled with -mavx2 -mfma and
// must only be entered after the dispatcher confirmed CPU support.

#include "lungdn/kernels.hpp"

#if LUNGDN_HAVE_AVX2_KERNELS

#include <immintrin.h>

#include <algorithm>

namespace lungdn::kernels::avx2 {
namespace {

template <class Real>
struct Vec;

template <>
struct Vec<double> {
  using reg = __m256d;
  static constexpr std::size_t width = 4;
  static reg zero() { return _mm256_setzero_pd(); }
  static reg load(const double* p) { return _mm256_loadu_pd(p); }
  static void store(double* p, reg v) { _mm256_storeu_pd(p, v); }
  static reg set1(double x) { return _mm256_set1_pd(x); }
  static reg fma(reg a, reg b, reg c) { return _mm256_fmadd_pd(a, b, c); }
  static reg add(reg a, reg b) { return _mm256_add_pd(a, b); }
  static double hsum(reg v) {
    __m128d lo = _mm256_castpd256_pd128(v);
    __m128d hi = _mm256_extractf128_pd(v, 1);
    lo = _mm_add_pd(lo, hi);
    __m128d sh = _mm_unpackhi_pd(lo, lo);
    return _mm_cvtsd_f64(_mm_add_sd(lo, sh));
  }
};

template <>
struct Vec<float> {
  using reg = __m256;
  static constexpr std::size_t width = 8;
  static reg zero() { return _mm256_setzero_ps(); }
  static reg load(const float* p) { return _mm256_loadu_ps(p); }
  static void store(float* p, reg v) { _mm256_storeu_ps(p, v); }
  static reg set1(float x) { return _mm256_set1_ps(x); }
  static reg fma(reg a, reg b, reg c) { return _mm256_fmadd_ps(a, b, c); }
  static reg add(reg a, reg b) { return _mm256_add_ps(a, b); }
  static float hsum(reg v) {
    __m128 lo = _mm256_castps256_ps128(v);
    __m128 hi = _mm256_extractf128_ps(v, 1);
    lo = _mm_add_ps(lo, hi);
    __m128 sh = _mm_movehdup_ps(lo);
    __m128 s = _mm_add_ps(lo, sh);
    sh = _mm_movehl_ps(sh, s);
    s = _mm_add_ss(s, sh);
    return _mm_cvtss_f32(s);
  }
};

constexpr std::size_t kBlockK = 256;
constexpr std::size_t kBlockM = 128;

// MR rows of C, NV vectors of columns, accumulated over k.
template <class Real, int MR, int NV>
inline void nn_tile(std::size_t k, const Real* a, std::size_t lda, const Real* b, std::size_t ldb,
                    Real* c, std::size_t ldc) {
  using V = Vec<Real>;
  typename V::reg acc[MR][NV];
  for (int r = 0; r < MR; ++r)
    for (int v = 0; v < NV; ++v) acc[r][v] = V::zero();
  for (std::size_t p = 0; p < k; ++p) {
    typename V::reg bv[NV];
    for (int v = 0; v < NV; ++v) bv[v] = V::load(b + p * ldb + v * V::width);
    for (int r = 0; r < MR; ++r) {
      const typename V::reg ar = V::set1(a[r * lda + p]);
      for (int v = 0; v < NV; ++v) acc[r][v] = V::fma(ar, bv[v], acc[r][v]);
    }
  }
  for (int r = 0; r < MR; ++r)
    for (int v = 0; v < NV; ++v) {
      Real* dst = c + r * ldc + v * V::width;
      V::store(dst, V::add(V::load(dst), acc[r][v]));
    }
}

template <class Real, int MR>
inline void nn_row_block(std::size_t n, std::size_t k, const Real* a, std::size_t lda,
                         const Real* b, std::size_t ldb, Real* c, std::size_t ldc) {
  using V = Vec<Real>;
  std::size_t j = 0;
  for (; j + 2 * V::width <= n; j += 2 * V::width)
    nn_tile<Real, MR, 2>(k, a, lda, b + j, ldb, c + j, ldc);
  for (; j + V::width <= n; j += V::width) nn_tile<Real, MR, 1>(k, a, lda, b + j, ldb, c + j, ldc);
  for (; j < n; ++j) {
    for (int r = 0; r < MR; ++r) {
      const Real* arow = a + r * lda;
      Real s = 0;
      if (ldb == 1) {
        s = dot<Real>(k, arow, b + j);
      } else {
        for (std::size_t p = 0; p < k; ++p) s += arow[p] * b[p * ldb + j];
      }
      c[r * ldc + j] += s;
    }
  }
}

// KR rows of C (columns of A), NV vectors of columns, accumulated over m.
template <class Real, int KR, int NV>
inline void tn_tile(std::size_t m, const Real* a, std::size_t lda, const Real* b, std::size_t ldb,
                    Real* c, std::size_t ldc) {
  using V = Vec<Real>;
  typename V::reg acc[KR][NV];
  for (int r = 0; r < KR; ++r)
    for (int v = 0; v < NV; ++v) acc[r][v] = V::zero();
  for (std::size_t i = 0; i < m; ++i) {
    typename V::reg bv[NV];
    for (int v = 0; v < NV; ++v) bv[v] = V::load(b + i * ldb + v * V::width);
    const Real* arow = a + i * lda;
    for (int r = 0; r < KR; ++r) {
      const typename V::reg ar = V::set1(arow[r]);
      for (int v = 0; v < NV; ++v) acc[r][v] = V::fma(ar, bv[v], acc[r][v]);
    }
  }
  for (int r = 0; r < KR; ++r)
    for (int v = 0; v < NV; ++v) {
      Real* dst = c + r * ldc + v * V::width;
      V::store(dst, V::add(V::load(dst), acc[r][v]));
    }
}

template <class Real, int KR>
inline void tn_col_block(std::size_t m, std::size_t n, const Real* a, std::size_t lda,
                         const Real* b, std::size_t ldb, Real* c, std::size_t ldc) {
  using V = Vec<Real>;
  std::size_t j = 0;
  for (; j + 2 * V::width <= n; j += 2 * V::width)
    tn_tile<Real, KR, 2>(m, a, lda, b + j, ldb, c + j, ldc);
  for (; j + V::width <= n; j += V::width) tn_tile<Real, KR, 1>(m, a, lda, b + j, ldb, c + j, ldc);
  for (; j < n; ++j) {
    for (int r = 0; r < KR; ++r) {
      Real s = 0;
      for (std::size_t i = 0; i < m; ++i) s += a[i * lda + r] * b[i * ldb + j];
      c[r * ldc + j] += s;
    }
  }
}

}  // namespace

template <class Real>
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const Real* a, std::size_t lda,
             const Real* b, std::size_t ldb, Real* c, std::size_t ldc) {
  for (std::size_t p0 = 0; p0 < k; p0 += kBlockK) {
    const std::size_t kc = std::min(kBlockK, k - p0);
    const Real* ab = a + p0;
    const Real* bb = b + p0 * ldb;
    std::size_t i = 0;
    for (; i + 4 <= m; i += 4) nn_row_block<Real, 4>(n, kc, ab + i * lda, lda, bb, ldb, c + i * ldc, ldc);
    for (; i < m; ++i) nn_row_block<Real, 1>(n, kc, ab + i * lda, lda, bb, ldb, c + i * ldc, ldc);
  }
}

template <class Real>
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const Real* a, std::size_t lda,
             const Real* b, std::size_t ldb, Real* c, std::size_t ldc) {
  for (std::size_t i0 = 0; i0 < m; i0 += kBlockM) {
    const std::size_t mc = std::min(kBlockM, m - i0);
    const Real* ab = a + i0 * lda;
    const Real* bb = b + i0 * ldb;
    std::size_t p = 0;
    for (; p + 4 <= k; p += 4) tn_col_block<Real, 4>(mc, n, ab + p, lda, bb, ldb, c + p * ldc, ldc);
    for (; p < k; ++p) tn_col_block<Real, 1>(mc, n, ab + p, lda, bb, ldb, c + p * ldc, ldc);
  }
}

template <class Real>
Real dot(std::size_t n, const Real* a, const Real* b) {
  using V = Vec<Real>;
  typename V::reg s0 = V::zero(), s1 = V::zero(), s2 = V::zero(), s3 = V::zero();
  std::size_t i = 0;
  for (; i + 4 * V::width <= n; i += 4 * V::width) {
    s0 = V::fma(V::load(a + i), V::load(b + i), s0);
    s1 = V::fma(V::load(a + i + V::width), V::load(b + i + V::width), s1);
    s2 = V::fma(V::load(a + i + 2 * V::width), V::load(b + i + 2 * V::width), s2);
    s3 = V::fma(V::load(a + i + 3 * V::width), V::load(b + i + 3 * V::width), s3);
  }
  for (; i + V::width <= n; i += V::width) s0 = V::fma(V::load(a + i), V::load(b + i), s0);
  Real s = V::hsum(V::add(V::add(s0, s1), V::add(s2, s3)));
  for (; i < n; ++i) s += a[i] * b[i];
  return s;
}

template <class Real>
void axpy(std::size_t n, Real alpha, const Real* x, Real* y) {
  using V = Vec<Real>;
  const typename V::reg va = V::set1(alpha);
  std::size_t i = 0;
  for (; i + V::width <= n; i += V::width) V::store(y + i, V::fma(va, V::load(x + i), V::load(y + i)));
  for (; i < n; ++i) y[i] += alpha * x[i];
}

#define LUNGDN_INSTANTIATE(Real)                                                              \
  template void gemm_nn<Real>(std::size_t, std::size_t, std::size_t, const Real*, std::size_t, \
                              const Real*, std::size_t, Real*, std::size_t);                   \
  template void gemm_tn<Real>(std::size_t, std::size_t, std::size_t, const Real*, std::size_t, \
                              const Real*, std::size_t, Real*, std::size_t);                   \
  template Real dot<Real>(std::size_t, const Real*, const Real*);                              \
  template void axpy<Real>(std::size_t, Real, const Real*, Real*);

LUNGDN_INSTANTIATE(float)
LUNGDN_INSTANTIATE(double)
#undef LUNGDN_INSTANTIATE

}  // namespace lungdn::kernels::avx2

#endif
