#include "splitfed/optim.hpp"

#include <cmath>

#include "splitfed/rng.hpp"

namespace splitfed {

AdamState AdamState::for_params(const ParamSet& params, AdamConfig config) {
  return AdamState{config, 0, params.zeros_like(), params.zeros_like()};
}

void adam_step(ParamSet& params, const ParamSet& grads, AdamState& state) {
  require_aligned(params, grads, "adam_step grads");
  require_aligned(params, state.m, "adam_step first moment");
  require_aligned(params, state.v, "adam_step second moment");

  state.step += 1;
  const auto& cfg = state.config;
  const double t = static_cast<double>(state.step);
  const float bc1 = static_cast<float>(1.0 - std::pow(static_cast<double>(cfg.beta1), t));
  const float bc2 = static_cast<float>(1.0 - std::pow(static_cast<double>(cfg.beta2), t));
  const float b1 = cfg.beta1, b2 = cfg.beta2;

  for (std::size_t i = 0; i < params.size(); ++i) {
    float* p = params.entry(i).value.data();
    const float* g = grads.entry(i).value.data();
    float* m = state.m.entry(i).value.data();
    float* v = state.v.entry(i).value.data();
    const std::size_t n = params.entry(i).value.size();
    for (std::size_t j = 0; j < n; ++j) {
      m[j] = b1 * m[j] + (1.0f - b1) * g[j];
      v[j] = b2 * v[j] + (1.0f - b2) * g[j] * g[j];
      const float m_hat = m[j] / bc1;
      const float v_hat = v[j] / bc2;
      p[j] -= cfg.learning_rate * m_hat / (std::sqrt(v_hat) + cfg.epsilon);
    }
  }
}

float decayed_learning_rate(float base, float factor, std::uint64_t interval, std::uint64_t iteration) {
  if (interval == 0) return base;
  return base * std::pow(factor, static_cast<float>(iteration / interval));
}

ParamSet init_params(const std::vector<ConvShape>& layers, std::uint64_t seed) {
  ParamSet params;
  for (const auto& layer : layers) {
    const std::size_t fan_in = layer.in_channels * layer.kernel * layer.kernel;
    const double stddev = std::sqrt(2.0 / static_cast<double>(fan_in));
    Tensor weight({layer.out_channels, layer.in_channels, layer.kernel, layer.kernel});
    Rng rng = Rng::stream(seed, layer.name);
    for (auto& w : weight.values()) w = static_cast<float>(stddev * rng.normal());
    params.add(layer.name + ".weight", std::move(weight));
    params.add(layer.name + ".bias", Tensor({layer.out_channels}));
  }
  return params;
}

}  // namespace splitfed
