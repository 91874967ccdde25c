#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "splitfed/tensor.hpp"

namespace splitfed {

struct AdamConfig {
  float learning_rate = 2e-4f;
  float beta1 = 0.9f;
  float beta2 = 0.999f;
  float epsilon = 1e-8f;
};

// Moments are stored as ParamSets aligned name-by-name with the parameters.
struct AdamState {
  AdamConfig config;
  std::uint64_t step = 0;
  ParamSet m;
  ParamSet v;

  static AdamState for_params(const ParamSet& params, AdamConfig config = {});
};

// One bias-corrected Adam update applied in parameter iteration order:
//   m <- b1 m + (1-b1) g,  v <- b2 v + (1-b2) g^2,
//   p <- p - lr * m_hat / (sqrt(v_hat) + eps).
// Throws ShapeError naming the first misaligned entry.
void adam_step(ParamSet& params, const ParamSet& grads, AdamState& state);

// Step decay: base * factor^floor(iteration / interval).
float decayed_learning_rate(float base, float factor, std::uint64_t interval, std::uint64_t iteration);

// Shape of one convolution's parameters inside a network.
struct ConvShape {
  std::string name;  // entries are "<name>.weight" and "<name>.bias"
  std::size_t out_channels;
  std::size_t in_channels;
  std::size_t kernel;
};

// He-normal weights (std = sqrt(2 / fan_in), fan_in = in_channels * k * k),
// zero biases. Each layer draws from its own stream keyed by layer name.
ParamSet init_params(const std::vector<ConvShape>& layers, std::uint64_t seed);

}  // namespace splitfed
