#include "splitfed/layers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace splitfed {

namespace {

struct ConvGeometry {
  std::size_t c_in, c_out, h, w, k;
};

ConvGeometry check_conv(const Tensor& input, const Tensor& weight, const Tensor& bias) {
  require_rank(input, 3, "conv2d input");
  require_rank(weight, 4, "conv2d weight");
  const std::size_t k = weight.dim(2);
  if (weight.dim(3) != k) throw ShapeError("conv2d weight: axis 3 must equal axis 2 (square kernel)");
  if (k % 2 == 0) throw ShapeError("conv2d weight: axis 2 kernel size must be odd");
  if (weight.dim(1) != input.dim(0)) {
    throw ShapeError("conv2d: weight axis 1 (" + std::to_string(weight.dim(1)) +
                     ") does not match input axis 0 channels (" + std::to_string(input.dim(0)) + ")");
  }
  require_dims(bias, {weight.dim(0)}, "conv2d bias");
  return {input.dim(0), weight.dim(0), input.dim(1), input.dim(2), k};
}

// Unfolds a zero-padded [C,H,W] input into rows of length H*W, one row per
// (channel, ky, kx) tap, so a convolution becomes a matrix product.
void im2col(const float* in, std::size_t c, std::size_t h, std::size_t w, std::size_t k, float* cols) {
  const auto pad = static_cast<std::ptrdiff_t>(k / 2);
  for (std::size_t ch = 0; ch < c; ++ch) {
    const float* src = in + ch * h * w;
    for (std::size_t ky = 0; ky < k; ++ky) {
      for (std::size_t kx = 0; kx < k; ++kx, cols += h * w) {
        const std::ptrdiff_t dx = static_cast<std::ptrdiff_t>(kx) - pad;
        for (std::size_t y = 0; y < h; ++y) {
          const std::ptrdiff_t sy = static_cast<std::ptrdiff_t>(y + ky) - pad;
          float* dst = cols + y * w;
          if (sy < 0 || sy >= static_cast<std::ptrdiff_t>(h)) {
            std::fill(dst, dst + w, 0.0f);
            continue;
          }
          const float* row = src + static_cast<std::size_t>(sy) * w;
          for (std::size_t x = 0; x < w; ++x) {
            const std::ptrdiff_t sx = static_cast<std::ptrdiff_t>(x) + dx;
            dst[x] = (sx >= 0 && sx < static_cast<std::ptrdiff_t>(w)) ? row[sx] : 0.0f;
          }
        }
      }
    }
  }
}

// Adjoint of im2col: scatters tap rows back onto the [C,H,W] gradient.
void col2im(const float* cols, std::size_t c, std::size_t h, std::size_t w, std::size_t k, float* out) {
  const auto pad = static_cast<std::ptrdiff_t>(k / 2);
  for (std::size_t ch = 0; ch < c; ++ch) {
    float* dst = out + ch * h * w;
    for (std::size_t ky = 0; ky < k; ++ky) {
      for (std::size_t kx = 0; kx < k; ++kx, cols += h * w) {
        const std::ptrdiff_t dx = static_cast<std::ptrdiff_t>(kx) - pad;
        const std::size_t x0 = static_cast<std::size_t>(std::max<std::ptrdiff_t>(0, -dx));
        const std::size_t x1 = static_cast<std::size_t>(
            std::min<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(w), static_cast<std::ptrdiff_t>(w) - dx));
        for (std::size_t y = 0; y < h; ++y) {
          const std::ptrdiff_t sy = static_cast<std::ptrdiff_t>(y + ky) - pad;
          if (sy < 0 || sy >= static_cast<std::ptrdiff_t>(h)) continue;
          float* row = dst + static_cast<std::size_t>(sy) * w;
          const float* src = cols + y * w;
          for (std::size_t x = x0; x < x1; ++x) row[static_cast<std::ptrdiff_t>(x) + dx] += src[x];
        }
      }
    }
  }
}

// c[m][n] += sum_k a(m,k) * b[k][n], with a(m,k) = a[m*a_m + k*a_k] so that
// both A and A^T can be passed without copying. Four output rows share each
// load of B.
void gemm_acc(std::size_t m, std::size_t n, std::size_t kdim, const float* a, std::size_t a_m, std::size_t a_k,
              const float* b, float* c) {
  constexpr std::size_t kRows = 4, kCols = 32;
  std::size_t i = 0;
  for (; i + kRows <= m; i += kRows) {
    std::size_t j = 0;
    for (; j + kCols <= n; j += kCols) {
      float acc[kRows][kCols];
      for (std::size_t r = 0; r < kRows; ++r) {
        for (std::size_t q = 0; q < kCols; ++q) acc[r][q] = c[(i + r) * n + j + q];
      }
      for (std::size_t p = 0; p < kdim; ++p) {
        const float* brow = b + p * n + j;
        for (std::size_t r = 0; r < kRows; ++r) {
          const float av = a[(i + r) * a_m + p * a_k];
          for (std::size_t q = 0; q < kCols; ++q) acc[r][q] += av * brow[q];
        }
      }
      for (std::size_t r = 0; r < kRows; ++r) {
        for (std::size_t q = 0; q < kCols; ++q) c[(i + r) * n + j + q] = acc[r][q];
      }
    }
    for (; j < n; ++j) {
      for (std::size_t r = 0; r < kRows; ++r) {
        float acc = c[(i + r) * n + j];
        for (std::size_t p = 0; p < kdim; ++p) acc += a[(i + r) * a_m + p * a_k] * b[p * n + j];
        c[(i + r) * n + j] = acc;
      }
    }
  }
  for (; i < m; ++i) {
    float* crow = c + i * n;
    for (std::size_t p = 0; p < kdim; ++p) {
      const float av = a[i * a_m + p * a_k];
      const float* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// c[m][k] = sum_n a[m][n] * b[k][n]: rows of A dotted with rows of B.
void gemm_abt(std::size_t m, std::size_t kdim, std::size_t n, const float* a, const float* b, float* c) {
  for (std::size_t i = 0; i < m; ++i) {
    const float* arow = a + i * n;
    std::size_t p = 0;
    for (; p + 2 <= kdim; p += 2) {
      const float* b0 = b + p * n;
      const float* b1 = b0 + n;
      float s0 = 0.0f, s1 = 0.0f;
#pragma omp simd reduction(+ : s0, s1)
      for (std::size_t j = 0; j < n; ++j) {
        s0 += arow[j] * b0[j];
        s1 += arow[j] * b1[j];
      }
      c[i * kdim + p] = s0;
      c[i * kdim + p + 1] = s1;
    }
    for (; p < kdim; ++p) {
      const float* b0 = b + p * n;
      float s0 = 0.0f;
#pragma omp simd reduction(+ : s0)
      for (std::size_t j = 0; j < n; ++j) s0 += arow[j] * b0[j];
      c[i * kdim + p] = s0;
    }
  }
}

std::vector<float>& scratch(int slot) {
  thread_local std::vector<float> buffers[2];
  return buffers[slot];
}

// The unfolded input; 1x1 kernels use the input as is.
const float* unfolded(const Tensor& input, std::size_t k) {
  if (k == 1) return input.data();
  const std::size_t c = input.dim(0), h = input.dim(1), w = input.dim(2);
  auto& cols = scratch(0);
  cols.resize(c * k * k * h * w);
  im2col(input.data(), c, h, w, k, cols.data());
  return cols.data();
}

}  // namespace

std::pair<Tensor, ConvCache> conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias) {
  const auto g = check_conv(input, weight, bias);
  const std::size_t plane = g.h * g.w;
  const std::size_t taps = g.c_in * g.k * g.k;
  Tensor out({g.c_out, g.h, g.w});
  for (std::size_t co = 0; co < g.c_out; ++co) {
    std::fill(out.data() + co * plane, out.data() + (co + 1) * plane, bias[co]);
  }
  gemm_acc(g.c_out, plane, taps, weight.data(), taps, 1, unfolded(input, g.k), out.data());
  return {std::move(out), ConvCache{input, weight}};
}

ConvGrads conv2d_backward(const ConvCache& cache, const Tensor& d_out, BackwardNeeds needs) {
  const Tensor& input = cache.input;
  const Tensor& weight = cache.weight;
  const std::size_t c_in = input.dim(0), h = input.dim(1), w = input.dim(2);
  const std::size_t c_out = weight.dim(0), k = weight.dim(2);
  require_dims(d_out, {c_out, h, w}, "conv2d_backward dOut");
  const std::size_t plane = h * w;
  const std::size_t taps = c_in * k * k;

  ConvGrads grads;
  if (needs.input) {
    grads.d_input = Tensor(input.dims());
    if (k == 1) {
      gemm_acc(taps, plane, c_out, weight.data(), 1, taps, d_out.data(), grads.d_input.data());
    } else {
      auto& d_cols = scratch(1);
      d_cols.assign(taps * plane, 0.0f);
      gemm_acc(taps, plane, c_out, weight.data(), 1, taps, d_out.data(), d_cols.data());
      col2im(d_cols.data(), c_in, h, w, k, grads.d_input.data());
    }
  }

  if (needs.params) {
    grads.d_weight = Tensor(weight.dims());
    grads.d_bias = Tensor({c_out});
    for (std::size_t co = 0; co < c_out; ++co) {
      const float* g = d_out.data() + co * plane;
      float bias_sum = 0.0f;
      for (std::size_t i = 0; i < plane; ++i) bias_sum += g[i];
      grads.d_bias[co] = bias_sum;
    }
    gemm_abt(c_out, taps, plane, d_out.data(), unfolded(input, k), grads.d_weight.data());
  }
  return grads;
}

std::pair<Tensor, ReluCache> relu(const Tensor& input) {
  Tensor out(input.dims());
  for (std::size_t i = 0; i < input.size(); ++i) out[i] = input[i] > 0.0f ? input[i] : 0.0f;
  return {std::move(out), ReluCache{input}};
}

Tensor relu_backward(const ReluCache& cache, const Tensor& d_out) {
  require_dims(d_out, cache.input.dims(), "relu_backward dOut");
  Tensor d_in(d_out.dims());
  for (std::size_t i = 0; i < d_out.size(); ++i) d_in[i] = cache.input[i] > 0.0f ? d_out[i] : 0.0f;
  return d_in;
}

std::pair<Tensor, PoolCache> maxpool2(const Tensor& input) {
  require_rank(input, 3, "maxpool2 input");
  const std::size_t c = input.dim(0), h = input.dim(1), w = input.dim(2);
  if (h % 2 != 0) throw ShapeError("maxpool2: axis 1 extent " + std::to_string(h) + " is odd");
  if (w % 2 != 0) throw ShapeError("maxpool2: axis 2 extent " + std::to_string(w) + " is odd");
  const std::size_t oh = h / 2, ow = w / 2;
  Tensor out({c, oh, ow});
  PoolCache cache{input.dims(), std::vector<std::uint32_t>(out.size())};
  std::size_t o = 0;
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t y = 0; y < oh; ++y) {
      for (std::size_t x = 0; x < ow; ++x, ++o) {
        std::size_t best = (ch * h + 2 * y) * w + 2 * x;
        const std::size_t candidates[3] = {best + 1, best + w, best + w + 1};
        for (auto idx : candidates) {
          if (input[idx] > input[best]) best = idx;
        }
        out[o] = input[best];
        cache.argmax[o] = static_cast<std::uint32_t>(best);
      }
    }
  }
  return {std::move(out), std::move(cache)};
}

Tensor maxpool2_backward(const PoolCache& cache, const Tensor& d_out) {
  const Dims expected{cache.input_dims[0], cache.input_dims[1] / 2, cache.input_dims[2] / 2};
  require_dims(d_out, expected, "maxpool2_backward dOut");
  Tensor d_in(cache.input_dims);
  for (std::size_t i = 0; i < d_out.size(); ++i) d_in[cache.argmax[i]] += d_out[i];
  return d_in;
}

std::pair<Tensor, UpsampleCache> upsample2(const Tensor& input) {
  require_rank(input, 3, "upsample2 input");
  const std::size_t c = input.dim(0), h = input.dim(1), w = input.dim(2);
  Tensor out({c, 2 * h, 2 * w});
  const std::size_t ow = 2 * w;
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t y = 0; y < h; ++y) {
      float* r0 = out.data() + (ch * 2 * h + 2 * y) * ow;
      float* r1 = r0 + ow;
      const float* src = input.data() + (ch * h + y) * w;
      for (std::size_t x = 0; x < w; ++x) {
        r0[2 * x] = r0[2 * x + 1] = src[x];
      }
      std::copy(r0, r0 + ow, r1);
    }
  }
  return {std::move(out), UpsampleCache{input.dims()}};
}

Tensor upsample2_backward(const UpsampleCache& cache, const Tensor& d_out) {
  const std::size_t c = cache.input_dims[0], h = cache.input_dims[1], w = cache.input_dims[2];
  require_dims(d_out, {c, 2 * h, 2 * w}, "upsample2_backward dOut");
  Tensor d_in(cache.input_dims);
  const std::size_t ow = 2 * w;
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t y = 0; y < h; ++y) {
      const float* r0 = d_out.data() + (ch * 2 * h + 2 * y) * ow;
      const float* r1 = r0 + ow;
      float* dst = d_in.data() + (ch * h + y) * w;
      for (std::size_t x = 0; x < w; ++x) {
        dst[x] = (r0[2 * x] + r0[2 * x + 1]) + (r1[2 * x] + r1[2 * x + 1]);
      }
    }
  }
  return d_in;
}

float sigmoid(float z) {
  // Clamped so probabilities stay strictly inside (0,1) even where float32
  // would round to an endpoint.
  constexpr float kLow = std::numeric_limits<float>::min();
  constexpr float kHigh = 1.0f - 0x1.0p-24f;
  float p;
  if (z >= 0.0f) {
    p = 1.0f / (1.0f + std::exp(-z));
  } else {
    const float e = std::exp(z);
    p = e / (1.0f + e);
  }
  return std::clamp(p, kLow, kHigh);
}

Tensor sigmoid(const Tensor& logits) {
  Tensor out(logits.dims());
  for (std::size_t i = 0; i < logits.size(); ++i) out[i] = sigmoid(logits[i]);
  return out;
}

}  // namespace splitfed
