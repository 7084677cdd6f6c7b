#pragma once

// Exact response of a soft-reset LIF neuron to a constant input current.
//
// Along any fixed spike history the membrane potential is affine in the
// input, V = a·X + b, so each step's firing condition splits the current
// input interval at a single crossing X*. Following every feasible branch
// yields the complete list of firing patterns and the half-open input
// intervals that produce them. Decay and threshold are taken as the
// decimal rationals they print as (0.3 -> 3/10), so boundaries are exact.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <boost/multiprecision/cpp_int.hpp>

namespace snncodec::oracle {

using Rational = boost::multiprecision::cpp_rational;

inline constexpr std::size_t kMaxSteps = 24;

struct FiringPattern {
  std::vector<std::uint8_t> bits;

  std::size_t steps() const { return bits.size(); }
  std::size_t spike_count() const;
  /// "0101"
  std::string str() const;

  friend bool operator==(const FiringPattern&, const FiringPattern&) = default;
};

/// Inputs lo <= X < hi produce `pattern`; hi absent means +∞.
struct PatternBoundary {
  FiringPattern pattern;
  Rational lo;
  std::optional<Rational> hi;

  bool contains(const Rational& x) const { return x >= lo && (!hi || x < *hi); }
  double lo_value() const;
  double hi_value() const;
};

/// Exact rational value of the shortest decimal that round-trips to v.
Rational decimal_rational(double v);

/// Runs the LIF recursion from rest with I[t] = x in double precision.
FiringPattern simulate_constant(double x, std::size_t steps, double decay, double v_th);

/// Patterns ordered by ascending lower bound; intervals tile [0, ∞).
std::vector<PatternBoundary> enumerate_boundaries(std::size_t steps, double decay, double v_th);

/// Pattern whose interval holds x (x compared exactly).
const FiringPattern& predict(const std::vector<PatternBoundary>& boundaries, double x);

struct Disagreement {
  double x;
  FiringPattern simulated;
  FiringPattern predicted;
};

struct VerifyReport {
  std::size_t agreements = 0;
  std::vector<Disagreement> disagreements;

  bool ok() const { return disagreements.empty(); }
};

/// Compares simulation against the enumerated intervals on `samples`
/// uniform draws over [0, hi_max + 1], plus every finite boundary b at
/// b ± 1e-9 (and at b itself when b is exactly representable).
VerifyReport verify_boundaries(std::size_t steps, double decay, double v_th, std::size_t samples,
                               std::uint64_t seed);

/// Round-half-even to `places` decimals, computed exactly.
std::string format_decimal(const Rational& value, int places = 4);

/// "pattern,lo,hi" with a header row; hi of the last row is "inf".
std::string boundaries_csv(const std::vector<PatternBoundary>& boundaries);

/// Aligned two-column table in the "lo <= X < hi" style.
std::string boundaries_table(const std::vector<PatternBoundary>& boundaries);

}  // namespace snncodec::oracle
