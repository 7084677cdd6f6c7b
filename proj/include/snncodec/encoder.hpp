#pragma once

// Unified temporal encoding of static inputs.
//
// Non-direct modes fire s_t = Θ(x_t − θ_t) against a threshold that decays
// as θ_{t+1} = θ_t·σ(a_t), with a_t learnable and shared per channel. What
// happens to the residual x after a spike distinguishes the modes:
//
//   Phase  x' = x − s·θ_t
//   Ttfs   x' = x − s·x      (at most one spike per neuron)
//   Rate   x' = x
//
// Direct mode skips spike generation and replicates the input T times.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "snncodec/tensor.hpp"

namespace snncodec {

enum class EncoderMode { Direct, Rate, Phase, Ttfs };

std::string_view to_string(EncoderMode mode);
/// Case-insensitive; returns nullopt for unknown names.
std::optional<EncoderMode> parse_encoder_mode(std::string_view name);

struct EncoderParams {
  std::size_t steps = 4;
  double theta0 = 1.0;
  /// [T, C] threshold decay logits. Row t sets θ_{t+1}; the last row is unused.
  Tensor decay_logits;
  bool lt_enabled = false;

  /// a = 0 everywhere (θ halves per step); trainable iff lt_enabled.
  static EncoderParams make(std::size_t steps, std::size_t channels, bool lt_enabled, double theta0 = 1.0);
  /// Logits reproducing a given threshold ladder θ_0..θ_{T−1} (strictly decreasing, positive).
  static EncoderParams from_thresholds(std::span<const double> thresholds, std::size_t channels);

  std::size_t channels() const { return decay_logits.dim(1); }
  void validate() const;
};

struct EncoderState {
  /// Residual input, channel axis 1.
  Tensor x;
  /// Per-channel threshold [C].
  Tensor theta;
};

struct EncodeStepResult {
  Tensor spikes;
  EncoderState state;
};

/// theta·σ(a_t), elementwise over channels.
Tensor threshold_step(const Tensor& theta, const Tensor& a_t);

/// Realized thresholds θ_0..θ_{T−1} per channel, [T, C].
Tensor threshold_schedule(const EncoderParams& params);

/// One spike-generation step. theta_t is per channel ([C]) or full-shape.
EncodeStepResult encode_step(const EncoderState& state, EncoderMode mode, const Tensor& theta_t,
                             const SpikeBackward& bw);

/// X[C,H,W] or X[B,C,H,W] (any rank >= 2 with channels on the axis after
/// the batch) -> [T, ...]. Rank-3 input is treated as a single sample.
Tensor encode(const Tensor& x, const EncoderParams& params, EncoderMode mode, const SpikeBackward& bw);

/// Rate coding by Bernoulli sampling with p = clamp(x, 0, 1). Comparison only.
Tensor encode_bernoulli_rate(const Tensor& x, std::size_t steps, std::uint64_t seed);

/// Uniformly random permutation of 0..T−1 determined by seed.
std::vector<std::size_t> time_permutation(std::size_t steps, std::uint64_t seed);

/// Reorders the leading (time) axis: out[t] = train[perm[t]].
Tensor permute_time(const Tensor& train, std::span<const std::size_t> perm);

Tensor temporal_shuffle(const Tensor& train, std::uint64_t seed);

}  // namespace snncodec
