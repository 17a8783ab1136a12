#include "lungdn/kernels.hpp"

namespace lungdn::kernels::scalar {

template <class Real>
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const Real* a, std::size_t lda,
             const Real* b, std::size_t ldb, Real* c, std::size_t ldc) {
  for (std::size_t i = 0; i < m; ++i) {
    const Real* arow = a + i * lda;
    Real* crow = c + i * ldc;
    for (std::size_t p = 0; p < k; ++p) {
      const Real aip = arow[p];
      const Real* brow = b + p * ldb;
      for (std::size_t j = 0; j < n; ++j) crow[j] += aip * brow[j];
    }
  }
}

template <class Real>
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const Real* a, std::size_t lda,
             const Real* b, std::size_t ldb, Real* c, std::size_t ldc) {
  for (std::size_t i = 0; i < m; ++i) {
    const Real* arow = a + i * lda;
    const Real* brow = b + i * ldb;
    for (std::size_t p = 0; p < k; ++p) {
      const Real aip = arow[p];
      Real* crow = c + p * ldc;
      for (std::size_t j = 0; j < n; ++j) crow[j] += aip * brow[j];
    }
  }
}

template <class Real>
Real dot(std::size_t n, const Real* a, const Real* b) {
  Real s = 0;
  for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}

template <class Real>
void axpy(std::size_t n, Real alpha, const Real* x, Real* y) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
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

}  // namespace lungdn::kernels::scalar
