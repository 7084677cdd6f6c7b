#include <doctest.h>

#include <string>
#include <tuple>
#include <vector>

#include "snncodec/error.hpp"
#include "snncodec/oracle.hpp"

using namespace snncodec;
using oracle::Rational;

namespace {

// Exact-arithmetic LIF recursion from rest, independent of the branch enumeration.
std::string exact_pattern(const Rational& x, std::size_t steps, const Rational& decay, const Rational& v_th) {
  Rational v = 0;
  std::string out;
  for (std::size_t t = 0; t < steps; ++t) {
    const Rational h = decay * v + (1 - decay) * x;
    const bool fire = h >= v_th;
    out += fire ? '1' : '0';
    v = fire ? h - v_th : h;
  }
  return out;
}

}  // namespace

TEST_SUITE("oracle") {
  TEST_CASE("decimal inputs become exact rationals") {
    CHECK(oracle::decimal_rational(0.3) == Rational(3, 10));
    CHECK(oracle::decimal_rational(0.5) == Rational(1, 2));
    CHECK(oracle::decimal_rational(2.0) == Rational(2));
  }

  TEST_CASE("four-step table at decay 0.5") {
    const auto b = oracle::enumerate_boundaries(4, 0.5, 1.0);
    REQUIRE(b.size() == 7);
    const std::vector<std::string> patterns{"0000", "0001", "0010", "0101", "0110", "0111", "1111"};
    const std::vector<Rational> lows{0, Rational(16, 15), Rational(8, 7), Rational(4, 3),
                                     Rational(12, 7), Rational(28, 15), 2};
    for (std::size_t i = 0; i < 7; ++i) {
      CHECK(b[i].pattern.str() == patterns[i]);
      CHECK(b[i].lo == lows[i]);
      if (i + 1 < 7) CHECK(*b[i].hi == lows[i + 1]);
    }
    CHECK_FALSE(b.back().hi.has_value());
  }

  TEST_CASE("one and two steps") {
    const auto one = oracle::enumerate_boundaries(1, 0.5, 1.0);
    REQUIRE(one.size() == 2);
    CHECK(one[0].pattern.str() == "0");
    CHECK(*one[0].hi == 2);
    CHECK(one[1].pattern.str() == "1");

    const auto two = oracle::enumerate_boundaries(2, 0.5, 1.0);
    REQUIRE(two.size() == 3);
    CHECK(two[1].pattern.str() == "01");
    CHECK(two[1].lo == Rational(4, 3));
    CHECK(two[2].lo == 2);
  }

  TEST_CASE("every boundary is a true switch point of the exact recursion") {
    for (auto [steps, decay, vth] : {std::tuple{4ul, 0.5, 1.0}, {4ul, 0.3, 1.0}, {6ul, 0.5, 1.0}, {5ul, 0.7, 0.8}}) {
      const Rational d = oracle::decimal_rational(decay), th = oracle::decimal_rational(vth);
      const auto b = oracle::enumerate_boundaries(steps, decay, vth);
      const Rational eps(1, 1000000000);
      for (std::size_t i = 0; i < b.size(); ++i) {
        CHECK(exact_pattern(b[i].lo, steps, d, th) == b[i].pattern.str());
        if (i > 0) CHECK(exact_pattern(b[i].lo - eps, steps, d, th) == b[i - 1].pattern.str());
        if (b[i].hi) CHECK(exact_pattern(*b[i].hi - eps, steps, d, th) == b[i].pattern.str());
      }
    }
  }

  TEST_CASE("spike count is nondecreasing across intervals") {
    for (std::size_t steps : {2ul, 4ul, 7ul}) {
      const auto b = oracle::enumerate_boundaries(steps, 0.5, 1.0);
      for (std::size_t i = 1; i < b.size(); ++i) CHECK(b[i].pattern.spike_count() >= b[i - 1].pattern.spike_count());
      CHECK(b.front().pattern.spike_count() == 0);
      CHECK(b.back().pattern.spike_count() == steps);
    }
  }

  TEST_CASE("prediction and simulation agree") {
    const auto b = oracle::enumerate_boundaries(4, 0.5, 1.0);
    CHECK(oracle::predict(b, 1.5).str() == "0101");
    CHECK(oracle::predict(b, 0.5).str() == "0000");
    CHECK(oracle::predict(b, 2.0).str() == "1111");
    CHECK(oracle::simulate_constant(1.5, 4, 0.5, 1.0).str() == "0101");
    for (auto [steps, decay] : {std::pair{1ul, 0.5}, {2ul, 0.5}, {4ul, 0.5}, {4ul, 0.3}, {6ul, 0.5}}) {
      const auto report = oracle::verify_boundaries(steps, decay, 1.0, 2000, 1);
      CHECK(report.ok());
      CHECK(report.agreements > 2000);
    }
  }

  TEST_CASE("formatting") {
    CHECK(oracle::format_decimal(Rational(16, 15)) == "1.0667");
    CHECK(oracle::format_decimal(Rational(1, 8), 2) == "0.12");  // ties to even
    CHECK(oracle::format_decimal(Rational(3, 8), 2) == "0.38");
    const auto b = oracle::enumerate_boundaries(1, 0.5, 1.0);
    CHECK(oracle::boundaries_csv(b) == "pattern,lo,hi\n0,0.0000,2.0000\n1,2.0000,inf\n");
    const std::string table = oracle::boundaries_table(b);
    CHECK(table.find("X < 2.0000") != std::string::npos);
    CHECK(table.find("2.0000 <= X") != std::string::npos);
  }

  TEST_CASE("invalid parameters") {
    CHECK_THROWS_AS(oracle::enumerate_boundaries(0, 0.5, 1.0), ContractError);
    CHECK_THROWS_AS(oracle::enumerate_boundaries(4, 1.5, 1.0), ContractError);
    CHECK_THROWS_AS(oracle::enumerate_boundaries(4, 0.5, -1.0), ContractError);
    CHECK_THROWS_AS(oracle::enumerate_boundaries(oracle::kMaxSteps + 1, 0.5, 1.0), ContractError);
  }
}
