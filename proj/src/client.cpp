#include "splitfed/client.hpp"

#include <algorithm>
#include <cmath>

#include "splitfed/serialize.hpp"

namespace splitfed {

namespace {

constexpr std::size_t kInferBatch = 16;

}  // namespace

RemoteDecoder::RemoteDecoder(Endpoint endpoint, std::string client_id)
    : endpoint_(std::move(endpoint)), client_id_(std::move(client_id)) {
  connect();
}

void RemoteDecoder::connect() {
  stream_ = std::make_unique<SocketStream>(connect_tcp(endpoint_));
  const Message reply = exchange(Hello{client_id_});
  if (const auto* ack = std::get_if<HelloAck>(&reply)) {
    contract_ = *ack;
    return;
  }
  if (const auto* err = std::get_if<ErrorReply>(&reply)) throw RemoteError(err->code, err->message);
  throw ConnectionError("handshake: unexpected " + tag_name(static_cast<std::uint8_t>(tag_of(reply))));
}

Message RemoteDecoder::exchange(const Message& m) {
  write_message(*stream_, m);
  auto reply = read_message(*stream_);
  if (!reply) throw ConnectionError("server closed the connection");
  return std::move(*reply);
}

Message RemoteDecoder::request(const Message& m) {
  Message reply;
  try {
    reply = exchange(m);
  } catch (const ConnectionError&) {
    ++reconnects_;
    connect();
    reply = exchange(m);
  }
  if (const auto* err = std::get_if<ErrorReply>(&reply)) throw RemoteError(err->code, err->message);
  return reply;
}

TrainResp RemoteDecoder::train_step(const Tensor& latents, const Tensor& masks) {
  auto reply = request(TrainStep{latents, masks});
  if (auto* r = std::get_if<TrainResp>(&reply)) return std::move(*r);
  throw ConnectionError("expected TRAIN_RESP");
}

Tensor RemoteDecoder::infer(const Tensor& latents) {
  auto reply = request(Infer{latents});
  if (auto* r = std::get_if<InferResp>(&reply)) return std::move(r->probabilities);
  throw ConnectionError("expected INFER_RESP");
}

Bytes RemoteDecoder::encoder_init() {
  auto reply = request(GetEncoderInit{});
  if (auto* r = std::get_if<EncoderWeights>(&reply)) return std::move(r->paramset);
  throw ConnectionError("expected ENCODER_WEIGHTS");
}

Digest RemoteDecoder::decoder_hash() {
  auto reply = request(GetDecoderHash{});
  if (auto* r = std::get_if<DecoderHash>(&reply)) return r->digest;
  throw ConnectionError("expected DECODER_HASH");
}

std::string to_string(InitMode m) { return m == InitMode::random ? "random" : "server"; }

InitMode parse_init_mode(std::string_view s) {
  if (s == "random") return InitMode::random;
  if (s == "server" || s == "from_server") return InitMode::from_server;
  throw ConfigError("unknown init mode '" + std::string(s) + "' (expected random|server)");
}

EncoderSpec encoder_spec_for(EncoderVariant variant, const Tensor& example_image, std::size_t latent_channels) {
  require_rank(example_image, 3, "training image");
  EncoderSpec spec;
  spec.variant = variant;
  spec.input_channels = example_image.dim(0);
  spec.input_height = example_image.dim(1);
  spec.input_width = example_image.dim(2);
  spec.latent_channels = latent_channels;
  return spec;
}

ParamSet init_encoder(const ClientConfig& config, const Encoder& encoder, RemoteDecoder& remote) {
  if (config.init_mode == InitMode::random) return encoder.init(derive_seed(config.seed, "encoder-init"));
  Bytes blob;
  try {
    blob = remote.encoder_init();
  } catch (const RemoteError& e) {
    throw ConfigError(std::string("encoder init from server failed: ") + e.what());
  }
  ParamSet params = parse_paramset(blob);
  try {
    require_aligned(encoder.init(0), params, "server-shipped encoder");
  } catch (const ShapeError& e) {
    throw ConfigError(std::string("server encoder does not match local ") + to_string(encoder.spec().variant) +
                      " encoder spec: " + e.what());
  }
  return params;
}

MetricReport evaluate_remote(RemoteDecoder& remote, const Encoder& encoder, const ParamSet& params,
                             std::span<const Sample> samples) {
  if (samples.empty()) throw ValidationError("evaluate_remote needs at least one sample");
  std::vector<Tensor> probs;
  std::vector<Tensor> masks;
  for (std::size_t start = 0; start < samples.size(); start += kInferBatch) {
    const std::size_t end = std::min(samples.size(), start + kInferBatch);
    std::vector<Tensor> latents;
    for (std::size_t i = start; i < end; ++i) latents.push_back(encoder.infer(params, samples[i].image));
    for (auto& p : unstack(remote.infer(stack(latents)))) probs.push_back(std::move(p));
  }
  for (const auto& s : samples) masks.push_back(s.mask);
  return segmentation_metrics(probs, masks);
}

RemoteTrainResult train_remote(const ClientConfig& config, const DatasetSplit& split) {
  RemoteDecoder remote(config.server, config.centre_id);
  return train_remote(config, split, remote);
}

RemoteTrainResult train_remote(const ClientConfig& config, const DatasetSplit& split, RemoteDecoder& remote) {
  if (split.train.empty()) throw ValidationError("centre " + config.centre_id + " has no training samples");
  const EncoderSpec spec = encoder_spec_for(config.variant, split.train.front().image,
                                            remote.latent_contract().channels);
  const Encoder encoder(spec);
  if (encoder.latent_shape() != remote.latent_contract()) {
    throw ConfigError("encoder latent " + to_string(encoder.latent_shape()) + " does not match server contract " +
                      to_string(remote.latent_contract()));
  }
  if (spec.input_height != remote.contract().image_height || spec.input_width != remote.contract().image_width) {
    throw ConfigError("image size does not match the server's mask contract");
  }

  ParamSet params = init_encoder(config, encoder, remote);
  const auto& schedule = config.schedule;
  AdamState adam = AdamState::for_params(params, schedule.adam());
  BatchSampler sampler(split.train.size(), schedule.batch_size, derive_seed(config.seed, "batches"));

  RemoteTrainResult result;
  result.spec = spec;
  result.best_encoder = params;

  auto save_last = [&] {
    if (config.out_dir) save_encoder_checkpoint(*config.out_dir / "encoder_last.sfps", spec, params);
  };

  try {
    for (std::uint64_t it = 1; it <= schedule.iterations; ++it) {
      const auto batch = sampler.next();
      std::vector<Tensor> latents, masks;
      std::vector<NetworkCache> caches;
      for (auto idx : batch) {
        auto [latent, cache] = encoder.forward(params, split.train[idx].image);
        latents.push_back(std::move(latent));
        caches.push_back(std::move(cache));
        masks.push_back(split.train[idx].mask);
      }
      const TrainResp resp = remote.train_step(stack(latents), stack(masks));
      if (!std::isfinite(resp.loss)) throw Error("non-finite loss at iteration " + std::to_string(it));
      const auto d_latents = unstack(resp.d_latents);
      ParamSet grads;
      for (std::size_t b = 0; b < batch.size(); ++b) {
        auto g = encoder.backward(params, caches[b], d_latents[b]);
        if (b == 0) {
          grads = std::move(g);
        } else {
          add_inplace(grads, g);
        }
      }
      adam.config.learning_rate = schedule.learning_rate_at(it - 1);
      adam_step(params, grads, adam);
      result.trace.losses.push_back({it, resp.loss});

      if (!split.test.empty() && schedule.evaluates_at(it)) {
        auto report = evaluate_remote(remote, encoder, params, split.test);
        if (result.trace.record_eval(it, report)) {
          result.best_encoder = params;
          result.best_report = std::move(report);
        }
      }
    }
  } catch (const ConnectionError&) {
    save_last();
    throw;
  }

  result.final_encoder = params;
  if (split.test.empty()) result.best_encoder = params;
  if (config.out_dir) {
    const auto ckpt = *config.out_dir / "encoder.sfps";
    save_encoder_checkpoint(ckpt, spec, result.best_encoder);
    save_encoder_checkpoint(*config.out_dir / "encoder_final.sfps", spec, result.final_encoder);
    result.trace.checkpoint = ckpt;
    write_trace_csv(result.trace, *config.out_dir / "trace_loss.csv", *config.out_dir / "trace_eval.csv");
  }
  return result;
}

}  // namespace splitfed
