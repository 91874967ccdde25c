#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>

#include "splitfed/metrics.hpp"
#include "splitfed/net.hpp"
#include "splitfed/segnet.hpp"
#include "splitfed/synthdata.hpp"
#include "splitfed/training.hpp"

namespace splitfed {

// One client session with the decoder server. Requests are synchronous; a
// transport failure triggers one reconnect-and-resend before giving up.
class RemoteDecoder {
 public:
  RemoteDecoder(Endpoint endpoint, std::string client_id);

  const HelloAck& contract() const { return contract_; }
  LatentShape latent_contract() const {
    return {contract_.latent_channels, contract_.latent_height, contract_.latent_width};
  }

  TrainResp train_step(const Tensor& latents, const Tensor& masks);
  Tensor infer(const Tensor& latents);
  // Source encoder SFPS bytes; RemoteError 0x0004 when none is hosted.
  Bytes encoder_init();
  Digest decoder_hash();

  std::uint64_t reconnects() const { return reconnects_; }

 private:
  void connect();
  Message request(const Message& m);
  Message exchange(const Message& m);

  Endpoint endpoint_;
  std::string client_id_;
  std::unique_ptr<SocketStream> stream_;
  HelloAck contract_;
  std::uint64_t reconnects_ = 0;
};

enum class InitMode { random, from_server };

std::string to_string(InitMode m);
InitMode parse_init_mode(std::string_view s);

struct ClientConfig {
  std::string centre_id;
  Endpoint server;
  EncoderVariant variant = EncoderVariant::small;
  InitMode init_mode = InitMode::random;
  TrainSchedule schedule;
  std::uint64_t seed = 0;
  // When set: encoder.sfps (best), encoder_final.sfps, the trace CSVs and,
  // on abort, encoder_last.sfps are written here.
  std::optional<std::filesystem::path> out_dir;
};

struct RemoteTrainResult {
  TrainTrace trace;
  ParamSet best_encoder;   // best test mIoU seen at an evaluation point
  ParamSet final_encoder;  // after the last iteration
  EncoderSpec spec;
  MetricReport best_report;
};

// Random init draws from derive_seed(seed, "encoder-init"); from_server
// requests the hosted source encoder and checks it matches the local spec.
ParamSet init_encoder(const ClientConfig& config, const Encoder& encoder, RemoteDecoder& remote);

// Trains only the local encoder: each iteration sends a TRAIN_STEP with the
// batch latents and masks, back-propagates the returned dLatent through the
// encoder and applies one Adam step. Batches come from
// BatchSampler(derive_seed(seed, "batches")).
RemoteTrainResult train_remote(const ClientConfig& config, const DatasetSplit& split);
RemoteTrainResult train_remote(const ClientConfig& config, const DatasetSplit& split, RemoteDecoder& remote);

// Encodes locally, decodes remotely, scores locally.
MetricReport evaluate_remote(RemoteDecoder& remote, const Encoder& encoder, const ParamSet& params,
                             std::span<const Sample> samples);

EncoderSpec encoder_spec_for(EncoderVariant variant, const Tensor& example_image, std::size_t latent_channels);

}  // namespace splitfed
