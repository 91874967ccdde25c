#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "splitfed/tensor.hpp"

namespace splitfed {

// Which gradients a backward call should produce. Skipped outputs are left
// as empty tensors.
struct BackwardNeeds {
  bool input = true;
  bool params = true;
};

// Forward records. Each holds exactly what its backward needs, by value.
struct ConvCache {
  Tensor input;
  Tensor weight;
};

struct ReluCache {
  Tensor input;
};

struct PoolCache {
  Dims input_dims;
  std::vector<std::uint32_t> argmax;  // flat input index per output element
};

struct UpsampleCache {
  Dims input_dims;
};

struct ConvGrads {
  Tensor d_input;
  Tensor d_weight;
  Tensor d_bias;
};

// Same-size convolution: input [C_in,H,W], weight [C_out,C_in,k,k] with k odd
// (1 or 3 in practice), bias [C_out], zero padding (k-1)/2, stride 1.
std::pair<Tensor, ConvCache> conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias);
ConvGrads conv2d_backward(const ConvCache& cache, const Tensor& d_out, BackwardNeeds needs = {});

std::pair<Tensor, ReluCache> relu(const Tensor& input);
// Subgradient at exactly 0 is 0.
Tensor relu_backward(const ReluCache& cache, const Tensor& d_out);

// 2x2 max pool, stride 2. Ties go to the first element in row-major window order.
std::pair<Tensor, PoolCache> maxpool2(const Tensor& input);
Tensor maxpool2_backward(const PoolCache& cache, const Tensor& d_out);

// Nearest-neighbour 2x upsampling; backward sums each 2x2 block.
std::pair<Tensor, UpsampleCache> upsample2(const Tensor& input);
Tensor upsample2_backward(const UpsampleCache& cache, const Tensor& d_out);

float sigmoid(float z);
Tensor sigmoid(const Tensor& logits);

}  // namespace splitfed
