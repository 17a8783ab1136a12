#include <array>
#include <cmath>
#include <vector>

#include "doctest.h"
#include "lungdn/errors.hpp"
#include "lungdn/kernels.hpp"
#include "test_util.hpp"

namespace k = lungdn::kernels;

namespace {

template <class Real>
std::vector<Real> rand_vec(std::size_t n, std::uint64_t seed) {
  auto v = testutil::random_vector(n, seed);
  return {v.begin(), v.end()};
}

template <class Real>
double max_abs_diff(const std::vector<Real>& a, const std::vector<Real>& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(double(a[i]) - double(b[i])));
  return m;
}

// Naive triple loop used as the oracle for both variants.
template <class Real>
void naive_nn(std::size_t m, std::size_t n, std::size_t kk, const Real* a, std::size_t lda, const Real* b,
              std::size_t ldb, Real* c, std::size_t ldc) {
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t p = 0; p < kk; ++p) acc += double(a[i * lda + p]) * double(b[p * ldb + j]);
      c[i * ldc + j] += Real(acc);
    }
}

template <class Real>
void check_gemm_nn(std::size_t m, std::size_t n, std::size_t kk, std::size_t lda, std::size_t ldc, double tol) {
  const std::size_t crows = (m - 1) * ldc + n;
  auto a = rand_vec<Real>((m - 1) * lda + kk, 1);
  auto b = rand_vec<Real>(kk * n, 2);
  auto c0 = rand_vec<Real>(crows, 3);
  auto ref = c0, sc = c0;
  naive_nn(m, n, kk, a.data(), lda, b.data(), n, ref.data(), ldc);
  k::scalar::gemm_nn(m, n, kk, a.data(), lda, b.data(), n, sc.data(), ldc);
  CHECK(max_abs_diff(ref, sc) < tol);
#if LUNGDN_HAVE_AVX2_KERNELS
  if (k::avx2_available()) {
    auto vc = c0;
    k::avx2::gemm_nn(m, n, kk, a.data(), lda, b.data(), n, vc.data(), ldc);
    CHECK(max_abs_diff(sc, vc) < tol);
  }
#endif
}

template <class Real>
void check_gemm_tn(std::size_t m, std::size_t n, std::size_t kk, std::size_t lda, double tol) {
  auto a = rand_vec<Real>((m - 1) * lda + kk, 4);
  auto b = rand_vec<Real>(m * n, 5);
  auto c0 = rand_vec<Real>(kk * n, 6);
  auto ref = c0, sc = c0;
  for (std::size_t p = 0; p < kk; ++p)
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t i = 0; i < m; ++i) acc += double(a[i * lda + p]) * double(b[i * n + j]);
      ref[p * n + j] += Real(acc);
    }
  k::scalar::gemm_tn(m, n, kk, a.data(), lda, b.data(), n, sc.data(), n);
  CHECK(max_abs_diff(ref, sc) < tol);
#if LUNGDN_HAVE_AVX2_KERNELS
  if (k::avx2_available()) {
    auto vc = c0;
    k::avx2::gemm_tn(m, n, kk, a.data(), lda, b.data(), n, vc.data(), n);
    CHECK(max_abs_diff(sc, vc) < tol);
  }
#endif
}

}  // namespace

TEST_CASE("gemm_nn variants agree with the naive product") {
  for (auto [m, n, kk] : std::vector<std::array<std::size_t, 3>>{
           {1, 1, 1}, {3, 5, 7}, {4, 8, 16}, {17, 13, 300}, {9, 33, 31}, {64, 1, 93}, {5, 128, 200}}) {
    CAPTURE(m);
    CAPTURE(n);
    CAPTURE(kk);
    check_gemm_nn<double>(m, n, kk, kk, n, 1e-12);
    check_gemm_nn<float>(m, n, kk, kk, n, 2e-4);
  }
}

TEST_CASE("gemm_nn handles overlapping A windows and overlapping C rows") {
  // Strided convolution layout: rows of A advance by 2 * Ci but span K * Ci.
  check_gemm_nn<double>(20, 6, 31 * 3, 2 * 3, 6, 1e-12);
  // Input-gradient layout: rows of C overlap.
  check_gemm_nn<double>(20, 31 * 3, 6, 6, 2 * 3, 1e-12);
  check_gemm_nn<double>(11, 5 * 2, 7, 7, 2, 1e-12);
  check_gemm_nn<float>(20, 31 * 3, 6, 6, 2 * 3, 2e-4);
}

TEST_CASE("gemm_tn variants agree with the naive product") {
  for (auto [m, n, kk] : std::vector<std::array<std::size_t, 3>>{
           {1, 1, 1}, {3, 5, 7}, {130, 9, 17}, {257, 16, 62}, {40, 128, 200}}) {
    CAPTURE(m);
    check_gemm_tn<double>(m, n, kk, kk, 1e-12);
    check_gemm_tn<float>(m, n, kk, kk, 5e-4);
  }
  check_gemm_tn<double>(50, 8, 31 * 4, 2 * 4, 1e-12);
}

TEST_CASE("dot and axpy variants agree") {
  for (std::size_t n : {0, 1, 3, 4, 15, 16, 17, 1000}) {
    auto a = rand_vec<double>(n, 7), b = rand_vec<double>(n, 8);
    double ref = 0.0;
    for (std::size_t i = 0; i < n; ++i) ref += a[i] * b[i];
    CHECK(std::abs(k::scalar::dot(n, a.data(), b.data()) - ref) < 1e-12);
    auto y1 = b, y2 = b;
    k::scalar::axpy(n, 0.25, a.data(), y1.data());
    for (std::size_t i = 0; i < n; ++i) CHECK(y1[i] == doctest::Approx(b[i] + 0.25 * a[i]).epsilon(1e-15));
#if LUNGDN_HAVE_AVX2_KERNELS
    if (k::avx2_available()) {
      CHECK(std::abs(k::avx2::dot(n, a.data(), b.data()) - ref) < 1e-12);
      k::avx2::axpy(n, 0.25, a.data(), y2.data());
      CHECK(max_abs_diff(y1, y2) < 1e-15);
      auto af = rand_vec<float>(n, 9), bf = rand_vec<float>(n, 10);
      CHECK(std::abs(k::avx2::dot(n, af.data(), bf.data()) - k::scalar::dot(n, af.data(), bf.data())) < 1e-3);
    }
#endif
  }
}

TEST_CASE("dispatcher can be pinned to the scalar path") {
  const auto before = k::active_isa();
  k::set_isa(k::Isa::scalar);
  CHECK(k::active_isa() == k::Isa::scalar);
  CHECK(k::isa_name(k::Isa::scalar) == "scalar");
  if (k::avx2_available()) {
    k::set_isa(k::Isa::avx2);
    CHECK(k::active_isa() == k::Isa::avx2);
  } else {
    CHECK_THROWS_AS(k::set_isa(k::Isa::avx2), lungdn::ConfigError);
  }
  k::set_isa(before);
}
