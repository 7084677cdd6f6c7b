#include <doctest.h>

#include <cmath>
#include <random>
#include <tuple>
#include <vector>

#include "snncodec/kernels.hpp"

using namespace snncodec::kernels;

namespace {

std::vector<double> random_values(std::size_t n, std::uint64_t seed, double zero_fraction = 0.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::uniform_real_distribution<double> p(0.0, 1.0);
  std::vector<double> v(n);
  for (auto& x : v) x = p(rng) < zero_fraction ? 0.0 : u(rng);
  return v;
}

// Textbook triple loop, independent of both kernel tables.
void naive_gemm(const std::vector<double>& a, const std::vector<double>& b, std::vector<double>& c, std::size_t m,
                std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      long double s = 0;
      for (std::size_t p = 0; p < k; ++p) s += static_cast<long double>(a[i * k + p]) * b[p * n + j];
      c[i * n + j] += static_cast<double>(s);
    }
}

void check_gemm(const KernelTable& table, std::size_t m, std::size_t k, std::size_t n, double zero_fraction) {
  auto a = random_values(m * k, 1 + m, zero_fraction);
  auto b = random_values(k * n, 2 + n);
  auto c = random_values(m * n, 3);
  auto expected = c;
  naive_gemm(a, b, expected, m, k, n);
  table.gemm({a.data(), m, k, k}, {b.data(), k, n, n}, {c.data(), m, n, n});
  for (std::size_t i = 0; i < c.size(); ++i) REQUIRE(c[i] == doctest::Approx(expected[i]).epsilon(1e-12));
}

}  // namespace

TEST_SUITE("kernels") {
  TEST_CASE("scalar gemm matches the naive product on odd shapes") {
    for (auto [m, k, n] : {std::tuple{1ul, 1ul, 1ul}, {3ul, 5ul, 7ul}, {9ul, 17ul, 13ul}, {33ul, 8ul, 40ul}}) {
      check_gemm(scalar_table(), m, k, n, 0.0);
      check_gemm(scalar_table(), m, k, n, 0.7);
    }
  }

  TEST_CASE("avx2 gemm matches the naive product, including tile remainders") {
    const KernelTable* fast = avx2_table();
    if (fast == nullptr) {
      MESSAGE("AVX2 unavailable on this CPU; skipped");
      return;
    }
    for (std::size_t m : {1ul, 4ul, 5ul, 11ul})
      for (std::size_t n : {1ul, 7ul, 8ul, 9ul, 31ul})
        for (std::size_t k : {1ul, 6ul, 19ul}) check_gemm(*fast, m, k, n, 0.3);
  }

  TEST_CASE("gemm honours strides of sub-matrix views") {
    const std::size_t m = 5, k = 6, n = 9, lda = 10, ldb = 12, ldc = 11;
    auto a = random_values(m * lda, 4);
    auto b = random_values(k * ldb, 5);
    std::vector<double> c_ref(m * ldc, 0.0);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j)
        for (std::size_t p = 0; p < k; ++p) c_ref[i * ldc + j] += a[i * lda + p] * b[p * ldb + j];
    std::vector<const KernelTable*> tables{&scalar_table()};
    if (avx2_table()) tables.push_back(avx2_table());
    for (const KernelTable* t : tables) {
      std::vector<double> c(m * ldc, 0.0);
      t->gemm({a.data(), m, k, lda}, {b.data(), k, n, ldb}, {c.data(), m, n, ldc});
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < ldc; ++j) {
          if (j < n) {
            CHECK(c[i * ldc + j] == doctest::Approx(c_ref[i * ldc + j]).epsilon(1e-12));
          } else {
            CHECK(c[i * ldc + j] == 0.0);  // padding untouched
          }
        }
    }
  }

  TEST_CASE("dot and axpy agree between scalar and avx2") {
    const KernelTable* fast = avx2_table();
    for (std::size_t n : {0ul, 1ul, 3ul, 4ul, 7ul, 8ul, 15ul, 16ul, 17ul, 100ul}) {
      auto x = random_values(n, 10 + n);
      auto y = random_values(n, 20 + n);
      long double ref = 0;
      for (std::size_t i = 0; i < n; ++i) ref += static_cast<long double>(x[i]) * y[i];
      CHECK(scalar_table().dot(x, y) == doctest::Approx(static_cast<double>(ref)).epsilon(1e-12));
      auto y_scalar = y;
      scalar_table().axpy(0.37, x, y_scalar);
      for (std::size_t i = 0; i < n; ++i) CHECK(y_scalar[i] == doctest::Approx(y[i] + 0.37 * x[i]));
      if (fast) {
        CHECK(fast->dot(x, y) == doctest::Approx(static_cast<double>(ref)).epsilon(1e-12));
        auto y_fast = y;
        fast->axpy(0.37, x, y_fast);
        for (std::size_t i = 0; i < n; ++i) CHECK(y_fast[i] == doctest::Approx(y_scalar[i]).epsilon(1e-15));
      }
    }
  }

  TEST_CASE("select switches the active table") {
    const std::string_view before = active().name;
    REQUIRE(select("scalar"));
    CHECK(active().name == "scalar");
    CHECK_FALSE(select("no-such-kernel"));
    REQUIRE(select(before));
    CHECK(active().name == before);
  }
}
