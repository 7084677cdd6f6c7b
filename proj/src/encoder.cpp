#include "snncodec/encoder.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numeric>
#include <random>

#include "snncodec/error.hpp"

namespace snncodec {

std::string_view to_string(EncoderMode mode) {
  switch (mode) {
    case EncoderMode::Direct: return "direct";
    case EncoderMode::Rate: return "rate";
    case EncoderMode::Phase: return "phase";
    case EncoderMode::Ttfs: return "ttfs";
  }
  return "unknown";
}

std::optional<EncoderMode> parse_encoder_mode(std::string_view name) {
  std::string lower(name);
  std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
  for (EncoderMode m : {EncoderMode::Direct, EncoderMode::Rate, EncoderMode::Phase, EncoderMode::Ttfs}) {
    if (lower == to_string(m)) return m;
  }
  return std::nullopt;
}

EncoderParams EncoderParams::make(std::size_t steps, std::size_t channels, bool lt_enabled, double theta0) {
  EncoderParams p;
  p.steps = steps;
  p.theta0 = theta0;
  p.lt_enabled = lt_enabled;
  p.decay_logits = Tensor::zeros({steps, channels}, lt_enabled);
  p.validate();
  return p;
}

EncoderParams EncoderParams::from_thresholds(std::span<const double> thresholds, std::size_t channels) {
  if (thresholds.empty()) throw ContractError("threshold ladder is empty");
  const std::size_t steps = thresholds.size();
  EncoderParams p = make(steps, channels, false, thresholds[0]);
  auto logits = p.decay_logits.mutable_values();
  for (std::size_t t = 0; t + 1 < steps; ++t) {
    const double ratio = thresholds[t + 1] / thresholds[t];
    if (!(thresholds[t + 1] > 0.0 && ratio < 1.0)) {
      throw ContractError("threshold ladder must be positive and strictly decreasing");
    }
    for (std::size_t c = 0; c < channels; ++c) logits[t * channels + c] = std::log(ratio / (1.0 - ratio));
  }
  return p;
}

void EncoderParams::validate() const {
  if (steps < 1) throw ContractError("encoder needs at least one time step");
  if (!(theta0 > 0.0)) throw ContractError("encoder theta0 must be positive");
  if (!decay_logits.defined() || decay_logits.rank() != 2 || decay_logits.dim(0) != steps) {
    throw DimensionError("encoder decay logits must be [T, C] with T = " + std::to_string(steps));
  }
}

Tensor threshold_step(const Tensor& theta, const Tensor& a_t) {
  if (theta.shape() != a_t.shape()) {
    throw DimensionError("threshold_step: " + shape_string(theta.shape()) + " vs " + shape_string(a_t.shape()));
  }
  for (double a : a_t.values()) {
    if (!std::isfinite(a)) throw NumericError("threshold_step: non-finite decay logit");
  }
  for (double th : theta.values()) {
    if (!(th > 0.0)) throw ContractError("threshold_step: thresholds must be positive");
  }
  return mul(theta, sigmoid(a_t));
}

Tensor threshold_schedule(const EncoderParams& params) {
  params.validate();
  std::vector<Tensor> rows;
  Tensor theta = Tensor::full({params.channels()}, params.theta0);
  rows.push_back(theta);
  for (std::size_t t = 0; t + 1 < params.steps; ++t) {
    theta = threshold_step(theta, select(params.decay_logits, t));
    rows.push_back(theta);
  }
  return stack(rows);
}

EncodeStepResult encode_step(const EncoderState& state, EncoderMode mode, const Tensor& theta_t,
                             const SpikeBackward& bw) {
  if (mode == EncoderMode::Direct) throw ContractError("encode_step: direct encoding has no spike generation");
  const Shape& shape = state.x.shape();
  Tensor theta_full;
  if (theta_t.shape() == shape) {
    theta_full = theta_t;
  } else if (theta_t.rank() == 1 && shape.size() >= 2 && shape[1] == theta_t.dim(0)) {
    theta_full = expand_channels(theta_t, shape);
  } else {
    throw DimensionError("encode_step: threshold " + shape_string(theta_t.shape()) + " does not fit input " +
                         shape_string(shape));
  }
  for (double th : theta_t.values()) {
    if (!(th > 0.0)) throw ContractError("encode_step: thresholds must be positive");
  }
  Tensor s = spike(sub(state.x, theta_full), bw);
  Tensor next;
  switch (mode) {
    case EncoderMode::Phase: next = sub(state.x, mul(s, theta_full)); break;
    case EncoderMode::Ttfs: next = sub(state.x, mul(s, state.x)); break;
    default: next = state.x; break;
  }
  return {std::move(s), {std::move(next), theta_t}};
}

Tensor encode(const Tensor& x, const EncoderParams& params, EncoderMode mode, const SpikeBackward& bw) {
  params.validate();
  const bool single = x.rank() == 3;
  const Tensor batched = single ? reshape(x, {1, x.dim(0), x.dim(1), x.dim(2)}) : x;
  if (batched.rank() < 2) throw DimensionError("encode: input needs a channel axis, got " + shape_string(x.shape()));

  std::vector<Tensor> frames;
  frames.reserve(params.steps);
  if (mode == EncoderMode::Direct) {
    for (std::size_t t = 0; t < params.steps; ++t) frames.push_back(batched);
  } else {
    if (batched.dim(1) != params.channels()) {
      throw DimensionError("encode: input has " + std::to_string(batched.dim(1)) + " channels, encoder " +
                           std::to_string(params.channels()));
    }
    EncoderState state{batched, Tensor::full({params.channels()}, params.theta0)};
    for (std::size_t t = 0; t < params.steps; ++t) {
      auto step = encode_step(state, mode, state.theta, bw);
      frames.push_back(std::move(step.spikes));
      state = std::move(step.state);
      if (t + 1 < params.steps) state.theta = threshold_step(state.theta, select(params.decay_logits, t));
    }
  }
  Tensor train = stack(frames);
  if (single) {
    Shape out{params.steps};
    out.insert(out.end(), x.shape().begin(), x.shape().end());
    train = reshape(train, out);
  }
  return train;
}

Tensor encode_bernoulli_rate(const Tensor& x, std::size_t steps, std::uint64_t seed) {
  if (steps < 1) throw ContractError("encode_bernoulli_rate: steps must be >= 1");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const std::size_t n = x.numel();
  std::vector<double> out(steps * n);
  const auto xv = x.values();
  for (std::size_t t = 0; t < steps; ++t) {
    for (std::size_t i = 0; i < n; ++i) out[t * n + i] = unit(rng) < std::clamp(xv[i], 0.0, 1.0) ? 1.0 : 0.0;
  }
  Shape shape{steps};
  shape.insert(shape.end(), x.shape().begin(), x.shape().end());
  return Tensor(std::move(shape), std::move(out));
}

std::vector<std::size_t> time_permutation(std::size_t steps, std::uint64_t seed) {
  std::vector<std::size_t> perm(steps);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  // Fisher-Yates with explicit draws so the permutation does not depend on
  // the standard library's shuffle implementation.
  for (std::size_t i = steps; i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng() % i);
    std::swap(perm[i - 1], perm[j]);
  }
  return perm;
}

Tensor permute_time(const Tensor& train, std::span<const std::size_t> perm) {
  if (train.rank() < 2 || perm.size() != train.dim(0)) {
    throw DimensionError("permute_time: permutation of " + std::to_string(perm.size()) + " for " +
                         shape_string(train.shape()));
  }
  std::vector<bool> seen(perm.size(), false);
  for (std::size_t p : perm) {
    if (p >= perm.size() || seen[p]) throw ContractError("permute_time: not a permutation");
    seen[p] = true;
  }
  std::vector<Tensor> frames;
  frames.reserve(perm.size());
  for (std::size_t t = 0; t < perm.size(); ++t) frames.push_back(select(train, perm[t]));
  return stack(frames);
}

Tensor temporal_shuffle(const Tensor& train, std::uint64_t seed) {
  const auto perm = time_permutation(train.dim(0), seed);
  return permute_time(train, perm);
}

}  // namespace snncodec
