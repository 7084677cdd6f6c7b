#include "snncodec/oracle.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <random>
#include <sstream>

#include "snncodec/error.hpp"

namespace snncodec::oracle {

namespace {

using boost::multiprecision::cpp_int;

void check_params(std::size_t steps, double decay, double v_th) {
  if (!(decay > 0.0 && decay < 1.0)) throw ContractError("decay must lie in (0, 1)");
  if (!(v_th > 0.0)) throw ContractError("threshold must be positive");
  if (steps < 1) throw ContractError("need at least one time step");
}

struct Branch {
  std::size_t t;
  Rational lo;
  std::optional<Rational> hi;
  // Membrane potential before step t as slope * X + intercept.
  Rational slope;
  Rational intercept;
  FiringPattern pattern;
};

// Exact binary value of a finite double.
Rational exact_binary(double v) {
  int exponent = 0;
  const double mantissa = std::frexp(v, &exponent);
  const auto scaled = static_cast<std::int64_t>(std::ldexp(mantissa, 53));
  Rational r(scaled);
  exponent -= 53;
  cpp_int power = cpp_int(1) << std::abs(exponent);
  return exponent >= 0 ? r * Rational(power) : r / Rational(power);
}

}  // namespace

std::size_t FiringPattern::spike_count() const {
  return static_cast<std::size_t>(std::count(bits.begin(), bits.end(), std::uint8_t{1}));
}

std::string FiringPattern::str() const {
  std::string out;
  out.reserve(bits.size());
  for (auto b : bits) out.push_back(b ? '1' : '0');
  return out;
}

double PatternBoundary::lo_value() const { return static_cast<double>(lo); }

double PatternBoundary::hi_value() const {
  return hi ? static_cast<double>(*hi) : std::numeric_limits<double>::infinity();
}

Rational decimal_rational(double v) {
  if (!std::isfinite(v)) throw NumericError("decimal_rational: non-finite value");
  char buf[512];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::fixed);
  std::string text(buf, res.ptr);
  const bool negative = !text.empty() && text[0] == '-';
  if (negative) text.erase(0, 1);
  cpp_int numerator = 0;
  cpp_int denominator = 1;
  bool fraction = false;
  for (char c : text) {
    if (c == '.') {
      fraction = true;
      continue;
    }
    numerator = numerator * 10 + (c - '0');
    if (fraction) denominator *= 10;
  }
  Rational r(numerator, denominator);
  return negative ? Rational(-r) : r;
}

FiringPattern simulate_constant(double x, std::size_t steps, double decay, double v_th) {
  check_params(steps, decay, v_th);
  if (!(x >= 0.0)) throw ContractError("simulate_constant: input must be nonnegative");
  FiringPattern out;
  out.bits.reserve(steps);
  double v = 0.0;
  for (std::size_t t = 0; t < steps; ++t) {
    const double h = decay * v + (1.0 - decay) * x;
    const bool fire = h - v_th >= 0.0;
    out.bits.push_back(fire ? 1 : 0);
    v = fire ? h - v_th : h;
  }
  return out;
}

std::vector<PatternBoundary> enumerate_boundaries(std::size_t steps, double decay, double v_th) {
  check_params(steps, decay, v_th);
  if (steps > kMaxSteps) throw ContractError("enumerate_boundaries: at most 24 time steps");
  const Rational leak = decimal_rational(decay);
  const Rational gain = Rational(1) - leak;
  const Rational threshold = decimal_rational(v_th);

  std::vector<PatternBoundary> out;
  // Depth-first with the non-firing (lower) half explored first keeps the
  // output sorted by lower bound.
  std::vector<Branch> pending;
  pending.push_back({0, Rational(0), std::nullopt, Rational(0), Rational(0), {}});
  while (!pending.empty()) {
    Branch br = std::move(pending.back());
    pending.pop_back();
    if (br.t == steps) {
      out.push_back({std::move(br.pattern), std::move(br.lo), std::move(br.hi)});
      continue;
    }
    const Rational slope = leak * br.slope + gain;
    const Rational intercept = leak * br.intercept;
    const Rational crossing = (threshold - intercept) / slope;

    auto fire_branch = [&](Rational lo, std::optional<Rational> hi) {
      Branch next{br.t + 1, std::move(lo), std::move(hi), slope, intercept - threshold, br.pattern};
      next.pattern.bits.push_back(1);
      return next;
    };
    auto rest_branch = [&](Rational lo, std::optional<Rational> hi) {
      Branch next{br.t + 1, std::move(lo), std::move(hi), slope, intercept, br.pattern};
      next.pattern.bits.push_back(0);
      return next;
    };

    if (crossing <= br.lo) {
      pending.push_back(fire_branch(br.lo, br.hi));
    } else if (br.hi && crossing >= *br.hi) {
      pending.push_back(rest_branch(br.lo, br.hi));
    } else {
      pending.push_back(fire_branch(crossing, br.hi));
      pending.push_back(rest_branch(br.lo, crossing));
    }
  }
  return out;
}

const FiringPattern& predict(const std::vector<PatternBoundary>& boundaries, double x) {
  const Rational exact = exact_binary(x);
  for (const auto& b : boundaries) {
    if (b.contains(exact)) return b.pattern;
  }
  throw ContractError("predict: input outside the enumerated domain");
}

VerifyReport verify_boundaries(std::size_t steps, double decay, double v_th, std::size_t samples,
                               std::uint64_t seed) {
  if (samples < 1) throw ContractError("verify_boundaries: need at least one sample");
  const auto boundaries = enumerate_boundaries(steps, decay, v_th);
  double top = 0.0;
  std::vector<double> probes;
  for (const auto& b : boundaries) {
    if (!b.hi) continue;
    const double edge = b.hi_value();
    top = std::max(top, edge);
    for (double x : {edge - 1e-9, edge + 1e-9}) {
      if (x >= 0.0) probes.push_back(x);
    }
    if (exact_binary(edge) == *b.hi) probes.push_back(edge);
  }
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> draw(0.0, top + 1.0);
  for (std::size_t i = 0; i < samples; ++i) probes.push_back(draw(rng));

  VerifyReport report;
  for (double x : probes) {
    auto simulated = simulate_constant(x, steps, decay, v_th);
    const auto& expected = predict(boundaries, x);
    if (simulated == expected) {
      ++report.agreements;
    } else {
      report.disagreements.push_back({x, std::move(simulated), expected});
    }
  }
  return report;
}

std::string format_decimal(const Rational& value, int places) {
  cpp_int scale = 1;
  for (int i = 0; i < places; ++i) scale *= 10;
  const bool negative = value < 0;
  const Rational magnitude = negative ? Rational(-value) : value;
  const cpp_int num = boost::multiprecision::numerator(magnitude) * scale;
  const cpp_int den = boost::multiprecision::denominator(magnitude);
  cpp_int q = num / den;
  const cpp_int twice_rem = (num % den) * 2;
  if (twice_rem > den || (twice_rem == den && (q & 1) != 0)) q += 1;
  std::string digits = q.str();
  if (places > 0) {
    if (digits.size() <= static_cast<std::size_t>(places)) {
      digits.insert(0, static_cast<std::size_t>(places) + 1 - digits.size(), '0');
    }
    digits.insert(digits.size() - static_cast<std::size_t>(places), ".");
  }
  return (negative && q != 0 ? "-" : "") + digits;
}

std::string boundaries_csv(const std::vector<PatternBoundary>& boundaries) {
  std::ostringstream out;
  out << "pattern,lo,hi\n";
  for (const auto& b : boundaries) {
    out << b.pattern.str() << ',' << format_decimal(b.lo) << ',' << (b.hi ? format_decimal(*b.hi) : "inf") << '\n';
  }
  return out.str();
}

std::string boundaries_table(const std::vector<PatternBoundary>& boundaries) {
  std::vector<std::string> ranges;
  for (const auto& b : boundaries) {
    std::string range;
    if (b.lo == 0 && b.hi) {
      range = "X < " + format_decimal(*b.hi);
    } else if (!b.hi) {
      range = format_decimal(b.lo) + " <= X";
    } else {
      range = format_decimal(b.lo) + " <= X < " + format_decimal(*b.hi);
    }
    ranges.push_back(std::move(range));
  }
  const std::string head1 = "Firing Pattern";
  std::size_t width = head1.size();
  for (const auto& b : boundaries) width = std::max(width, b.pattern.steps());
  std::ostringstream out;
  out << head1 << std::string(width - head1.size() + 2, ' ') << "Boundary Range\n";
  for (std::size_t i = 0; i < boundaries.size(); ++i) {
    const std::string p = boundaries[i].pattern.str();
    out << p << std::string(width - p.size() + 2, ' ') << ranges[i] << '\n';
  }
  return out.str();
}

}  // namespace snncodec::oracle
