#include "snncodec/neuron.hpp"

#include <cmath>
#include <string>
#include <vector>

#include "snncodec/error.hpp"

namespace snncodec {

LifParams LifParams::standard(std::size_t steps, double decay, double v_th) {
  LifParams p;
  p.steps = steps;
  p.decay = decay;
  p.v_th = v_th;
  p.validate();
  return p;
}

LifParams LifParams::make_learnable(std::size_t steps, std::size_t channels, double decay, double v_th) {
  LifParams p = standard(steps, decay, v_th);
  p.learnable = true;
  const double logit = std::log(decay / (1.0 - decay));
  p.decay_logits = Tensor::full({steps, channels}, logit, true);
  p.input_weights = Tensor::full({steps, channels}, 1.0 - decay, true);
  return p;
}

void LifParams::validate() const {
  if (!(decay > 0.0 && decay < 1.0)) throw ContractError("LIF decay must lie in (0, 1)");
  if (!(v_th > 0.0)) throw ContractError("LIF threshold must be positive");
  if (steps < 1) throw ContractError("LIF needs at least one time step");
  if (learnable) {
    if (!decay_logits.defined() || !input_weights.defined()) {
      throw ContractError("learnable LIF requires decay logits and input weights");
    }
    if (decay_logits.rank() != 2 || decay_logits.shape() != input_weights.shape() || decay_logits.dim(0) != steps) {
      throw DimensionError("learnable LIF parameters must both be [T, C] with T = " + std::to_string(steps));
    }
  }
}

LifState lif_rest(const Shape& shape) { return {Tensor::zeros(shape)}; }

LifStepResult lif_step(const LifState& state, const Tensor& input_current, const LifParams& params, std::size_t t,
                       const SpikeBackward& bw) {
  if (t >= params.steps) throw ContractError("lif_step: t out of range");
  if (state.v.shape() != input_current.shape()) {
    throw DimensionError("lif_step: state " + shape_string(state.v.shape()) + " vs input " +
                         shape_string(input_current.shape()));
  }
  Tensor h;
  if (params.learnable) {
    const Shape& shape = input_current.shape();
    if (shape.size() < 2 || shape[1] != params.decay_logits.dim(1)) {
      throw DimensionError("lif_step: channel axis of " + shape_string(shape) + " does not match " +
                           std::to_string(params.decay_logits.dim(1)) + " learnable channels");
    }
    const Tensor leak = expand_channels(sigmoid(select(params.decay_logits, t)), shape);
    const Tensor gain = expand_channels(select(params.input_weights, t), shape);
    h = add(mul(leak, state.v), mul(gain, input_current));
  } else {
    h = add(scale(state.v, params.decay), scale(input_current, 1.0 - params.decay));
  }
  Tensor s = spike(add_scalar(h, -params.v_th), bw);
  Tensor v = sub(h, scale(s, params.v_th));
  return {std::move(s), {std::move(v)}, std::move(h)};
}

Tensor lif_run(const Tensor& currents, const LifParams& params, const SpikeBackward& bw) {
  params.validate();
  if (currents.rank() < 2 || currents.dim(0) != params.steps) {
    throw DimensionError("lif_run: expected leading time axis of " + std::to_string(params.steps) + ", got " +
                         shape_string(currents.shape()));
  }
  const std::size_t steps = params.steps;
  if (params.learnable) {
    if (currents.rank() < 3 || currents.dim(2) != params.decay_logits.dim(1)) {
      throw DimensionError("lif_run: channel axis of " + shape_string(currents.shape()) + " does not match " +
                           std::to_string(params.decay_logits.dim(1)) + " learnable channels");
    }
    return lif_scan(currents, sigmoid(params.decay_logits), params.input_weights, params.v_th, bw);
  }
  const Tensor leak = Tensor::full({steps, 1}, params.decay);
  const Tensor gain = Tensor::full({steps, 1}, 1.0 - params.decay);
  if (currents.rank() >= 3) return lif_scan(currents, leak, gain, params.v_th, bw);
  const Tensor spikes = lif_scan(reshape(currents, {steps, currents.dim(1), 1}), leak, gain, params.v_th, bw);
  return reshape(spikes, currents.shape());
}

}  // namespace snncodec
