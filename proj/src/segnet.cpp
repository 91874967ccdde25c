#include "splitfed/segnet.hpp"

#include <fstream>

#include "json.hpp"

#include "splitfed/serialize.hpp"

namespace splitfed {

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};

std::string weight_name(const ConvShape& c) { return c.name + ".weight"; }
std::string bias_name(const ConvShape& c) { return c.name + ".bias"; }

}  // namespace

Network& Network::conv(std::string name, std::size_t in_channels, std::size_t out_channels,
                       std::size_t kernel) {
  layers_.push_back({LayerKind::conv, {std::move(name), out_channels, in_channels, kernel}});
  return *this;
}

Network& Network::relu() {
  layers_.push_back({LayerKind::relu, {}});
  return *this;
}

Network& Network::maxpool2() {
  layers_.push_back({LayerKind::maxpool2, {}});
  return *this;
}

Network& Network::upsample2() {
  layers_.push_back({LayerKind::upsample2, {}});
  return *this;
}

std::vector<ConvShape> Network::conv_shapes() const {
  std::vector<ConvShape> out;
  for (const auto& l : layers_) {
    if (l.kind == LayerKind::conv) out.push_back(l.conv);
  }
  return out;
}

std::vector<std::string> Network::param_names() const {
  std::vector<std::string> out;
  for (const auto& c : conv_shapes()) {
    out.push_back(weight_name(c));
    out.push_back(bias_name(c));
  }
  return out;
}

std::pair<Tensor, NetworkCache> Network::forward(const ParamSet& params, const Tensor& input) const {
  NetworkCache cache;
  cache.layers.reserve(layers_.size());
  Tensor x = input;
  for (const auto& l : layers_) {
    switch (l.kind) {
      case LayerKind::conv: {
        auto [y, c] = splitfed::conv2d(x, params.at(weight_name(l.conv)), params.at(bias_name(l.conv)));
        cache.layers.emplace_back(std::move(c));
        x = std::move(y);
        break;
      }
      case LayerKind::relu: {
        auto [y, c] = splitfed::relu(x);
        cache.layers.emplace_back(std::move(c));
        x = std::move(y);
        break;
      }
      case LayerKind::maxpool2: {
        auto [y, c] = splitfed::maxpool2(x);
        cache.layers.emplace_back(std::move(c));
        x = std::move(y);
        break;
      }
      case LayerKind::upsample2: {
        auto [y, c] = splitfed::upsample2(x);
        cache.layers.emplace_back(std::move(c));
        x = std::move(y);
        break;
      }
    }
  }
  return {std::move(x), std::move(cache)};
}

Tensor Network::infer(const ParamSet& params, const Tensor& input) const {
  Tensor x = input;
  for (const auto& l : layers_) {
    switch (l.kind) {
      case LayerKind::conv:
        x = splitfed::conv2d(x, params.at(weight_name(l.conv)), params.at(bias_name(l.conv))).first;
        break;
      case LayerKind::relu:
        for (auto& v : x.values()) v = v > 0.0f ? v : 0.0f;
        break;
      case LayerKind::maxpool2:
        x = splitfed::maxpool2(x).first;
        break;
      case LayerKind::upsample2:
        x = splitfed::upsample2(x).first;
        break;
    }
  }
  return x;
}

NetworkGrads Network::backward(const ParamSet& params, const NetworkCache& cache, const Tensor& d_out,
                               BackwardNeeds needs) const {
  if (cache.layers.size() != layers_.size()) {
    throw ShapeError("backward: cache has " + std::to_string(cache.layers.size()) +
                     " layers, network has " + std::to_string(layers_.size()));
  }
  std::vector<std::pair<Tensor, Tensor>> conv_grads;  // reverse order
  Tensor g = d_out;
  for (std::size_t i = layers_.size(); i-- > 0;) {
    const bool first = i == 0;
    // Stop early once neither parameter grads nor anything upstream is needed.
    if (!needs.params && !needs.input) break;
    std::visit(overloaded{
                   [&](const ConvCache& c) {
                     const auto& shape = layers_[i].conv;
                     require_dims(c.weight, params.at(weight_name(shape)).dims(), "backward weight");
                     auto r = conv2d_backward(c, g, {!first || needs.input, needs.params});
                     if (needs.params) conv_grads.emplace_back(std::move(r.d_weight), std::move(r.d_bias));
                     g = std::move(r.d_input);
                   },
                   [&](const ReluCache& c) { g = relu_backward(c, g); },
                   [&](const PoolCache& c) { g = maxpool2_backward(c, g); },
                   [&](const UpsampleCache& c) { g = upsample2_backward(c, g); },
               },
               cache.layers[i]);
  }
  NetworkGrads out;
  if (needs.input) out.d_input = std::move(g);
  if (needs.params) {
    auto shapes = conv_shapes();
    for (std::size_t j = 0; j < shapes.size(); ++j) {
      auto& [dw, db] = conv_grads[shapes.size() - 1 - j];
      out.params.add(weight_name(shapes[j]), std::move(dw));
      out.params.add(bias_name(shapes[j]), std::move(db));
    }
  }
  return out;
}

Network concat(const Network& head, const Network& tail) {
  auto layers = head.layers_;
  layers.insert(layers.end(), tail.layers_.begin(), tail.layers_.end());
  return Network(std::move(layers));
}

std::string to_string(EncoderVariant v) {
  switch (v) {
    case EncoderVariant::small: return "small";
    case EncoderVariant::medium: return "medium";
    case EncoderVariant::large: return "large";
  }
  return "unknown";
}

EncoderVariant parse_variant(std::string_view s) {
  if (s == "small") return EncoderVariant::small;
  if (s == "medium") return EncoderVariant::medium;
  if (s == "large") return EncoderVariant::large;
  throw ConfigError("unknown encoder variant '" + std::string(s) + "'");
}

std::array<std::size_t, 3> encoder_widths(EncoderVariant v) {
  switch (v) {
    case EncoderVariant::small: return {8, 16, 32};
    case EncoderVariant::medium: return {16, 32, 64};
    case EncoderVariant::large: return {32, 64, 128};
  }
  throw ConfigError("unknown encoder variant");
}

std::string to_string(const LatentShape& s) {
  return std::to_string(s.channels) + "x" + std::to_string(s.height) + "x" + std::to_string(s.width);
}

Encoder::Encoder(EncoderSpec spec) : spec_(spec) {
  if (spec_.input_height % 8 != 0 || spec_.input_width % 8 != 0 || spec_.input_height == 0 ||
      spec_.input_width == 0) {
    throw ConfigError("encoder input resolution " + std::to_string(spec_.input_height) + "x" +
                      std::to_string(spec_.input_width) + " is not divisible by 8");
  }
  if (spec_.input_channels == 0 || spec_.latent_channels == 0) {
    throw ConfigError("encoder channel counts must be positive");
  }
  const auto widths = encoder_widths(spec_.variant);
  std::size_t in = spec_.input_channels;
  for (std::size_t b = 0; b < widths.size(); ++b) {
    net_.conv("enc.down" + std::to_string(b + 1) + ".conv", in, widths[b], 3).relu().maxpool2();
    in = widths[b];
  }
  if (in != spec_.latent_channels) net_.conv("enc.project", in, spec_.latent_channels, 1).relu();
  latent_ = {spec_.latent_channels, spec_.input_height / 8, spec_.input_width / 8};
}

std::pair<Tensor, NetworkCache> Encoder::forward(const ParamSet& params, const Tensor& image) const {
  require_dims(image, image_dims(), "encoder_forward image");
  return net_.forward(params, image);
}

Tensor Encoder::infer(const ParamSet& params, const Tensor& image) const {
  require_dims(image, image_dims(), "encoder_forward image");
  return net_.infer(params, image);
}

ParamSet Encoder::backward(const ParamSet& params, const NetworkCache& cache, const Tensor& d_latent) const {
  require_dims(d_latent, latent_.dims(), "encoder_backward dLatent");
  return net_.backward(params, cache, d_latent, {false, true}).params;
}

BuiltEncoder build_encoder(const EncoderSpec& spec, std::uint64_t seed) {
  Encoder enc(spec);
  auto params = enc.init(seed);
  auto latent = enc.latent_shape();
  return {std::move(enc), std::move(params), latent};
}

Decoder::Decoder(DecoderSpec spec) : spec_(spec) {
  if (spec_.latent.channels == 0 || spec_.latent.height == 0 || spec_.latent.width == 0) {
    throw ConfigError("decoder latent shape must be positive");
  }
  std::size_t in = spec_.latent.channels;
  for (std::size_t b = 0; b < spec_.widths.size(); ++b) {
    net_.upsample2().conv("dec.up" + std::to_string(b + 1) + ".conv", in, spec_.widths[b], 3).relu();
    in = spec_.widths[b];
  }
  net_.conv("dec.head", in, 1, 1);
}

std::pair<Tensor, NetworkCache> Decoder::forward(const ParamSet& params, const Tensor& latent) const {
  require_dims(latent, spec_.latent.dims(), "decoder_forward latent");
  return net_.forward(params, latent);
}

Tensor Decoder::infer(const ParamSet& params, const Tensor& latent) const {
  require_dims(latent, spec_.latent.dims(), "decoder_forward latent");
  return net_.infer(params, latent);
}

DecoderGrads Decoder::backward(const ParamSet& params, const NetworkCache& cache, const Tensor& d_logits,
                               BackwardNeeds needs) const {
  require_dims(d_logits, output_dims(), "decoder_backward dLogits");
  auto r = net_.backward(params, cache, d_logits, needs);
  return {std::move(r.d_input), std::move(r.params)};
}

namespace {

nlohmann::json latent_json(const LatentShape& s) { return {s.channels, s.height, s.width}; }

LatentShape latent_from_json(const nlohmann::json& j) {
  return {j.at(0).get<std::size_t>(), j.at(1).get<std::size_t>(), j.at(2).get<std::size_t>()};
}

std::filesystem::path sidecar(const std::filesystem::path& p) {
  auto s = p;
  s.replace_extension(".json");
  return s;
}

void write_json(const std::filesystem::path& p, const nlohmann::json& j) {
  std::ofstream out(p);
  if (!out) throw Error("cannot write " + p.string());
  out << j.dump(2) << "\n";
}

nlohmann::json read_json(const std::filesystem::path& p) {
  std::ifstream in(p);
  if (!in) throw Error("cannot read " + p.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("bad checkpoint descriptor " + p.string() + ": " + e.what());
  }
}

}  // namespace

void save_encoder_checkpoint(const std::filesystem::path& path, const EncoderSpec& spec,
                             const ParamSet& params) {
  save_paramset(params, path);
  const auto widths = encoder_widths(spec.variant);
  write_json(sidecar(path), {{"kind", "encoder"},
                             {"variant", to_string(spec.variant)},
                             {"input_channels", spec.input_channels},
                             {"input_size", {spec.input_height, spec.input_width}},
                             {"widths", widths},
                             {"latent_shape", latent_json(Encoder(spec).latent_shape())}});
}

std::pair<EncoderSpec, ParamSet> load_encoder_checkpoint(const std::filesystem::path& path) {
  auto params = load_paramset(path);
  EncoderSpec spec;
  const auto side = sidecar(path);
  if (std::filesystem::exists(side)) {
    try {
      auto j = read_json(side);
      spec.variant = parse_variant(j.at("variant").get<std::string>());
      spec.input_channels = j.at("input_channels").get<std::size_t>();
      spec.input_height = j.at("input_size").at(0).get<std::size_t>();
      spec.input_width = j.at("input_size").at(1).get<std::size_t>();
      spec.latent_channels = latent_from_json(j.at("latent_shape")).channels;
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("bad encoder descriptor " + side.string() + ": " + e.what());
    }
  }
  require_aligned(Encoder(spec).init(0), params, "encoder checkpoint");
  return {spec, std::move(params)};
}

void save_decoder_checkpoint(const std::filesystem::path& path, const DecoderSpec& spec,
                             const ParamSet& params) {
  save_paramset(params, path);
  write_json(sidecar(path),
             {{"kind", "decoder"}, {"widths", spec.widths}, {"latent_shape", latent_json(spec.latent)}});
}

std::pair<DecoderSpec, ParamSet> load_decoder_checkpoint(const std::filesystem::path& path) {
  auto params = load_paramset(path);
  DecoderSpec spec;
  const auto side = sidecar(path);
  if (std::filesystem::exists(side)) {
    try {
      auto j = read_json(side);
      spec.latent = latent_from_json(j.at("latent_shape"));
      spec.widths = j.at("widths").get<std::array<std::size_t, 3>>();
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("bad decoder descriptor " + side.string() + ": " + e.what());
    }
  }
  require_aligned(Decoder(spec).init(0), params, "decoder checkpoint");
  return {spec, std::move(params)};
}

}  // namespace splitfed
