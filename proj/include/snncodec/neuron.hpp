#pragma once

// Soft-reset leaky integrate-and-fire neurons.
//
//   standard:   H = L·V + (1 − L)·I
//   learnable:  H = σ(decay_t[t])·V + beta_t[t]·I     (per step, per channel)
//   S = Θ(H − v_th),  V' = H − S·v_th
//
// Learnable parameters are shared by every neuron of a channel; the channel
// axis of a per-step current is axis 1 ([B, C, ...]).

#include <cstddef>

#include "snncodec/tensor.hpp"

namespace snncodec {

struct LifParams {
  double decay = 0.5;
  double v_th = 1.0;
  std::size_t steps = 4;
  bool learnable = false;
  /// [T, C] decay logits, realized decay σ(logit).
  Tensor decay_logits;
  /// [T, C] input weights.
  Tensor input_weights;

  static LifParams standard(std::size_t steps, double decay = 0.5, double v_th = 1.0);
  /// Starts at the standard configuration: σ(logit) = decay and beta = 1 − decay.
  static LifParams make_learnable(std::size_t steps, std::size_t channels, double decay = 0.5, double v_th = 1.0);

  void validate() const;
};

struct LifState {
  Tensor v;
};

struct LifStepResult {
  Tensor spikes;
  LifState state;
  /// Pre-reset membrane potential H.
  Tensor potential;
};

/// Rest state (V = 0) shaped like one step of input.
LifState lif_rest(const Shape& shape);

LifStepResult lif_step(const LifState& state, const Tensor& input_current, const LifParams& params, std::size_t t,
                       const SpikeBackward& bw);

/// currents[T, ...] -> spikes[T, ...], starting from rest.
Tensor lif_run(const Tensor& currents, const LifParams& params, const SpikeBackward& bw);

}  // namespace snncodec
