#include <doctest.h>

#include <cmath>
#include <string>
#include <vector>

#include "snncodec/error.hpp"
#include "snncodec/neuron.hpp"
#include "snncodec/oracle.hpp"

using namespace snncodec;

namespace {

LifStepResult one_step(double v, double i, const LifParams& p) {
  return lif_step(LifState{Tensor({1, 1}, {v})}, Tensor({1, 1}, {i}), p, 0, SpikeBackward::surrogate());
}

std::string pattern(const Tensor& spikes) {
  std::string s;
  for (double v : spikes.values()) s += v == 1.0 ? '1' : '0';
  return s;
}

Tensor constant_currents(double x, std::size_t steps) { return Tensor::full({steps, 1}, x); }

}  // namespace

TEST_SUITE("neuron") {
  TEST_CASE("standard step examples") {
    const LifParams p = LifParams::standard(4, 0.5, 1.0);
    auto r = one_step(0.0, 2.0, p);
    CHECK(r.potential.item() == 1.0);
    CHECK(r.spikes.item() == 1.0);
    CHECK(r.state.v.item() == 0.0);

    r = one_step(0.8, 1.0, p);
    CHECK(r.potential.item() == doctest::Approx(0.9).epsilon(1e-15));
    CHECK(r.spikes.item() == 0.0);
    CHECK(r.state.v.item() == doctest::Approx(0.9).epsilon(1e-15));

    r = one_step(0.0, 0.0, p);
    CHECK(r.spikes.item() == 0.0);
    CHECK(r.state.v.item() == 0.0);
  }

  TEST_CASE("learnable step example") {
    LifParams p = LifParams::make_learnable(4, 1, 0.5, 1.0);
    p.input_weights.mutable_values()[0] = 2.0;
    const auto r = one_step(0.0, 1.0, p);
    CHECK(r.potential.item() == 2.0);
    CHECK(r.spikes.item() == 1.0);
    CHECK(r.state.v.item() == 1.0);
  }

  TEST_CASE("constant-input runs match the boundary table") {
    const LifParams p = LifParams::standard(4);
    CHECK(pattern(lif_run(constant_currents(1.5, 4), p, SpikeBackward::surrogate())) == "0101");
    CHECK(pattern(lif_run(constant_currents(0.5, 4), p, SpikeBackward::surrogate())) == "0000");
    CHECK(pattern(lif_run(constant_currents(2.5, 4), p, SpikeBackward::surrogate())) == "1111");
  }

  TEST_CASE("soft reset identity holds every step") {
    const LifParams p = LifParams::standard(6, 0.3, 0.7);
    LifState s = lif_rest({1, 5});
    for (std::size_t t = 0; t < 6; ++t) {
      const Tensor current({1, 5}, {0.1, 0.9, 1.7, 2.4, -0.3});
      const auto r = lif_step(s, current, p, t, SpikeBackward::exact_zero());
      for (std::size_t i = 0; i < 5; ++i) {
        CHECK(r.state.v[i] + r.spikes[i] * 0.7 == r.potential[i]);
        CHECK((r.spikes[i] == 0.0 || r.spikes[i] == 1.0));
      }
      s = r.state;
    }
  }

  TEST_CASE("learnable at the standard point reproduces standard bit-exactly") {
    const std::size_t steps = 5, channels = 3;
    const LifParams standard = LifParams::standard(steps, 0.5, 1.0);
    const LifParams learnable = LifParams::make_learnable(steps, channels, 0.5, 1.0);
    std::vector<double> v(steps * 2 * channels * 2);
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = 0.37 * static_cast<double>(i % 11);
    const Tensor currents({steps, 2, channels, 2}, v);
    const Tensor a = lif_run(currents, standard, SpikeBackward::surrogate());
    const Tensor b = lif_run(currents, learnable, SpikeBackward::surrogate());
    for (std::size_t i = 0; i < a.numel(); ++i) CHECK(a[i] == b[i]);
  }

  TEST_CASE("dense grid agrees with the oracle") {
    for (auto [steps, decay] : {std::pair{4ul, 0.5}, {3ul, 0.3}}) {
      const LifParams p = LifParams::standard(steps, decay, 1.0);
      const auto bounds = oracle::enumerate_boundaries(steps, decay, 1.0);
      for (int k = 0; k <= 3000; ++k) {
        const double x = k * 1e-3;
        const std::string got = pattern(lif_run(constant_currents(x, steps), p, SpikeBackward::exact_zero()));
        REQUIRE_MESSAGE(got == oracle::predict(bounds, x).str(), "x=" << x);
      }
    }
  }

  TEST_CASE("fused run matches the step-by-step composition, values and gradients") {
    const std::size_t steps = 4, batch = 2, channels = 3, inner = 5;
    std::vector<double> v(steps * batch * channels * inner);
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = std::sin(0.7 * static_cast<double>(i)) * 1.8 + 0.6;
    for (bool learnable : {false, true}) {
      for (const SpikeBackward& bw : {SpikeBackward::surrogate(), SpikeBackward::relaxed(), SpikeBackward::exact_zero()}) {
        LifParams p = learnable ? LifParams::make_learnable(steps, channels, 0.3, 0.9) : LifParams::standard(steps, 0.3, 0.9);
        if (learnable) {
          auto w = p.input_weights.mutable_values();
          for (std::size_t i = 0; i < w.size(); ++i) w[i] = 0.4 + 0.05 * static_cast<double>(i);
        }
        Tensor fused_in({steps, batch, channels, inner}, v, true);
        Tensor step_in({steps, batch, channels, inner}, v, true);
        const Tensor fused = lif_run(fused_in, p, bw);
        std::vector<double> weights(fused.numel());
        for (std::size_t i = 0; i < weights.size(); ++i) weights[i] = std::cos(0.3 * static_cast<double>(i));
        const Tensor probe({steps, batch, channels, inner}, weights);
        backward(sum(mul(fused, probe)));
        std::vector<double> fused_grad(fused_in.grad().begin(), fused_in.grad().end());
        std::vector<double> fused_pgrad;
        if (learnable) {
          fused_pgrad.assign(p.decay_logits.grad().begin(), p.decay_logits.grad().end());
          fused_pgrad.insert(fused_pgrad.end(), p.input_weights.grad().begin(), p.input_weights.grad().end());
          p.decay_logits.zero_grad();
          p.input_weights.zero_grad();
        }

        LifState state = lif_rest({batch, channels, inner});
        std::vector<Tensor> parts;
        for (std::size_t t = 0; t < steps; ++t) {
          auto r = lif_step(state, select(step_in, t), p, t, bw);
          parts.push_back(r.spikes);
          state = r.state;
        }
        const Tensor stepped = stack(parts);
        for (std::size_t i = 0; i < fused.numel(); ++i) REQUIRE(fused[i] == stepped[i]);
        backward(sum(mul(stepped, probe)));
        for (std::size_t i = 0; i < fused_grad.size(); ++i)
          CHECK(fused_grad[i] == doctest::Approx(step_in.grad()[i]).epsilon(1e-12));
        if (learnable) {
          std::vector<double> pgrad(p.decay_logits.grad().begin(), p.decay_logits.grad().end());
          pgrad.insert(pgrad.end(), p.input_weights.grad().begin(), p.input_weights.grad().end());
          for (std::size_t i = 0; i < pgrad.size(); ++i) CHECK(fused_pgrad[i] == doctest::Approx(pgrad[i]).epsilon(1e-12));
        }
      }
    }
  }

  TEST_CASE("invalid parameters and shapes are rejected") {
    CHECK_THROWS_AS(LifParams::standard(4, 1.0).validate(), ContractError);
    CHECK_THROWS_AS(LifParams::standard(4, 0.5, 0.0).validate(), ContractError);
    CHECK_THROWS_AS(LifParams::standard(0).validate(), ContractError);
    const LifParams p = LifParams::standard(4);
    CHECK_THROWS_AS(lif_run(Tensor::zeros({3, 2}), p, SpikeBackward::surrogate()), DimensionError);
    CHECK_THROWS_AS(
        lif_step(lif_rest({1, 2}), Tensor::zeros({1, 3}), p, 0, SpikeBackward::surrogate()), DimensionError);
    CHECK_THROWS_AS(lif_step(lif_rest({1, 2}), Tensor::zeros({1, 2}), p, 4, SpikeBackward::surrogate()),
                    ContractError);
  }
}
