#include <atomic>
#include <cstdlib>
#include <string>

#include "lungdn/errors.hpp"
#include "lungdn/kernels.hpp"

namespace lungdn::kernels {
namespace {

bool cpu_has_avx2() noexcept {
#if LUNGDN_HAVE_AVX2_KERNELS && (defined(__GNUC__) || defined(__clang__))
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

Isa detect() noexcept {
  if (const char* env = std::getenv("LUNGDN_ISA"); env != nullptr && std::string(env) == "scalar")
    return Isa::scalar;
  return cpu_has_avx2() ? Isa::avx2 : Isa::scalar;
}

std::atomic<Isa>& current() {
  static std::atomic<Isa> isa{detect()};
  return isa;
}

}  // namespace

std::string_view isa_name(Isa isa) noexcept { return isa == Isa::avx2 ? "avx2" : "scalar"; }

Isa active_isa() noexcept { return current().load(std::memory_order_relaxed); }

bool avx2_available() noexcept { return cpu_has_avx2(); }

void set_isa(Isa isa) {
  if (isa == Isa::avx2 && !avx2_available()) throw ConfigError("AVX2 kernels unavailable on this CPU");
  current().store(isa, std::memory_order_relaxed);
}

#if LUNGDN_HAVE_AVX2_KERNELS
#define LUNGDN_DISPATCH(fn, ...) \
  (active_isa() == Isa::avx2 ? avx2::fn<Real>(__VA_ARGS__) : scalar::fn<Real>(__VA_ARGS__))
#else
#define LUNGDN_DISPATCH(fn, ...) scalar::fn<Real>(__VA_ARGS__)
#endif

template <class Real>
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const Real* a, std::size_t lda,
             const Real* b, std::size_t ldb, Real* c, std::size_t ldc) {
  LUNGDN_DISPATCH(gemm_nn, m, n, k, a, lda, b, ldb, c, ldc);
}

template <class Real>
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const Real* a, std::size_t lda,
             const Real* b, std::size_t ldb, Real* c, std::size_t ldc) {
  LUNGDN_DISPATCH(gemm_tn, m, n, k, a, lda, b, ldb, c, ldc);
}

template <class Real>
Real dot(std::size_t n, const Real* a, const Real* b) {
  return LUNGDN_DISPATCH(dot, n, a, b);
}

template <class Real>
void axpy(std::size_t n, Real alpha, const Real* x, Real* y) {
  LUNGDN_DISPATCH(axpy, n, alpha, x, y);
}

#undef LUNGDN_DISPATCH

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

}  // namespace lungdn::kernels
