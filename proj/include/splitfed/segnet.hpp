#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "splitfed/layers.hpp"
#include "splitfed/optim.hpp"
#include "splitfed/tensor.hpp"

namespace splitfed {

enum class LayerKind { conv, relu, maxpool2, upsample2 };

struct Layer {
  LayerKind kind;
  ConvShape conv;  // only meaningful for LayerKind::conv
};

using LayerCache = std::variant<ConvCache, ReluCache, PoolCache, UpsampleCache>;

struct NetworkCache {
  std::vector<LayerCache> layers;
};

struct NetworkGrads {
  Tensor d_input;   // empty unless requested
  ParamSet params;  // aligned with the network's parameters; empty unless requested
};

// A straight chain of layers over a single [C,H,W] tensor.
class Network {
 public:
  Network() = default;
  explicit Network(std::vector<Layer> layers) : layers_(std::move(layers)) {}

  Network& conv(std::string name, std::size_t in_channels, std::size_t out_channels, std::size_t kernel);
  Network& relu();
  Network& maxpool2();
  Network& upsample2();

  const std::vector<Layer>& layers() const { return layers_; }
  std::vector<ConvShape> conv_shapes() const;
  std::vector<std::string> param_names() const;

  std::pair<Tensor, NetworkCache> forward(const ParamSet& params, const Tensor& input) const;
  // Forward without recording caches.
  Tensor infer(const ParamSet& params, const Tensor& input) const;
  NetworkGrads backward(const ParamSet& params, const NetworkCache& cache, const Tensor& d_out,
                        BackwardNeeds needs = {}) const;

  friend Network concat(const Network& head, const Network& tail);

 private:
  std::vector<Layer> layers_;
};

enum class EncoderVariant { small, medium, large };

std::string to_string(EncoderVariant v);
EncoderVariant parse_variant(std::string_view s);
// Channel widths of the three down blocks.
std::array<std::size_t, 3> encoder_widths(EncoderVariant v);

struct LatentShape {
  std::size_t channels = 0;
  std::size_t height = 0;
  std::size_t width = 0;

  Dims dims() const { return {channels, height, width}; }
  friend bool operator==(const LatentShape&, const LatentShape&) = default;
};

std::string to_string(const LatentShape& s);

struct EncoderSpec {
  EncoderVariant variant = EncoderVariant::small;
  std::size_t input_channels = 1;
  std::size_t input_height = 32;
  std::size_t input_width = 32;
  // Channel count of the latent every variant must produce.
  std::size_t latent_channels = 32;

  friend bool operator==(const EncoderSpec&, const EncoderSpec&) = default;
};

// Three down blocks (conv3x3, ReLU, maxpool2), so the latent is input/8 in
// each spatial axis. Variants whose last width differs from the latent
// channel count end in a 1x1 projection plus ReLU so that every variant
// produces the same LatentShape.
class Encoder {
 public:
  explicit Encoder(EncoderSpec spec = {});

  const EncoderSpec& spec() const { return spec_; }
  const LatentShape& latent_shape() const { return latent_; }
  const Network& network() const { return net_; }
  Dims image_dims() const { return {spec_.input_channels, spec_.input_height, spec_.input_width}; }

  ParamSet init(std::uint64_t seed) const { return init_params(net_.conv_shapes(), seed); }
  std::pair<Tensor, NetworkCache> forward(const ParamSet& params, const Tensor& image) const;
  Tensor infer(const ParamSet& params, const Tensor& image) const;
  ParamSet backward(const ParamSet& params, const NetworkCache& cache, const Tensor& d_latent) const;

 private:
  EncoderSpec spec_;
  LatentShape latent_;
  Network net_;
};

struct BuiltEncoder {
  Encoder encoder;
  ParamSet params;
  LatentShape latent;
};

BuiltEncoder build_encoder(const EncoderSpec& spec, std::uint64_t seed);

struct DecoderSpec {
  LatentShape latent{32, 4, 4};
  std::array<std::size_t, 3> widths{32, 16, 8};

  friend bool operator==(const DecoderSpec&, const DecoderSpec&) = default;
};

struct DecoderGrads {
  Tensor d_latent;  // empty unless requested
  ParamSet params;  // empty unless requested
};

// Three up blocks (upsample2, conv3x3, ReLU) followed by a 1x1 head that
// emits a single-channel logit map at 8x the latent resolution.
class Decoder {
 public:
  explicit Decoder(DecoderSpec spec = {});

  const DecoderSpec& spec() const { return spec_; }
  const LatentShape& latent_shape() const { return spec_.latent; }
  const Network& network() const { return net_; }
  Dims output_dims() const { return {1, 8 * spec_.latent.height, 8 * spec_.latent.width}; }

  ParamSet init(std::uint64_t seed) const { return init_params(net_.conv_shapes(), seed); }
  std::pair<Tensor, NetworkCache> forward(const ParamSet& params, const Tensor& latent) const;
  Tensor infer(const ParamSet& params, const Tensor& latent) const;
  DecoderGrads backward(const ParamSet& params, const NetworkCache& cache, const Tensor& d_logits,
                        BackwardNeeds needs = {}) const;

 private:
  DecoderSpec spec_;
  Network net_;
};

inline constexpr std::string_view kEncoderPrefix = "enc.";
inline constexpr std::string_view kDecoderPrefix = "dec.";

// Checkpoints are an SFPS file plus a JSON sidecar (same stem, ".json")
// recording the architecture.
void save_encoder_checkpoint(const std::filesystem::path& path, const EncoderSpec& spec,
                             const ParamSet& params);
std::pair<EncoderSpec, ParamSet> load_encoder_checkpoint(const std::filesystem::path& path);
void save_decoder_checkpoint(const std::filesystem::path& path, const DecoderSpec& spec,
                             const ParamSet& params);
std::pair<DecoderSpec, ParamSet> load_decoder_checkpoint(const std::filesystem::path& path);

}  // namespace splitfed
