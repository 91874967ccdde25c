#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <memory>
#include <mutex>
#include <optional>
#include <thread>
#include <vector>

#include "splitfed/net.hpp"
#include "splitfed/segnet.hpp"
#include "splitfed/wire.hpp"

namespace splitfed {

// Request rejected for a protocol-level reason; carried back as an ERROR frame.
class ContractError : public Error {
 public:
  ContractError(std::uint16_t code, const std::string& message) : Error(message), code_(code) {}
  std::uint16_t code() const noexcept { return code_; }

 private:
  std::uint16_t code_;
};

struct TrainStepResult {
  float loss;
  Tensor d_latents;
};

struct DecoderHostOptions {
  // Skip decoder weight gradients during train steps. dLatent is identical
  // either way; the weight gradients are discarded regardless.
  bool skip_decoder_grads = false;
};

// The shared, frozen half of the model. Everything here is fixed at
// construction; request handlers only read it, so one instance can serve any
// number of sessions concurrently.
class DecoderHost {
 public:
  using Options = DecoderHostOptions;

  DecoderHost(DecoderSpec spec, ParamSet decoder_params,
              std::optional<ParamSet> source_encoder = std::nullopt, Options options = {});

  const ParamSet& decoder_params() const { return params_; }
  const Digest& decoder_hash() const { return hash_; }
  const LatentShape& latent_contract() const { return decoder_.latent_shape(); }
  std::pair<std::size_t, std::size_t> image_contract() const;
  bool hosts_encoder() const { return encoder_bytes_.has_value(); }
  HelloAck hello_ack() const;

  // loss and dLatent for a batch; decoder parameters are never written.
  TrainStepResult handle_train_step(const Tensor& latents, const Tensor& masks) const;
  // sigmoid(decoder(latent)) per batch item.
  Tensor handle_infer(const Tensor& latents) const;
  // ENCODER_WEIGHTS, or ERROR 0x0004 when no source encoder is hosted.
  Message handle_encoder_init() const;

  // Dispatches one request for a session. Contract violations become ERROR replies.
  Message handle(const Message& request, bool handshake_done) const;

 private:
  void check_latents(const Tensor& latents) const;

  const Decoder decoder_;
  const ParamSet params_;
  const Digest hash_;
  const std::optional<Bytes> encoder_bytes_;
  const Options options_;
};

struct ServerOptions {
  Endpoint listen{"127.0.0.1", 0};
  std::optional<std::filesystem::path> log_path;
  int poll_interval_ms = 50;
};

// Thread-per-session TCP front end for a DecoderHost. Each session is
// HELLO -> HELLO_ACK, then strictly sequential request/response.
class Server {
 public:
  Server(std::shared_ptr<const DecoderHost> host, ServerOptions options);
  ~Server();
  Server(const Server&) = delete;
  Server& operator=(const Server&) = delete;

  // Binds and starts accepting in the background.
  void start();
  std::uint16_t port() const { return port_; }
  Endpoint endpoint() const { return {options_.listen.host == "0.0.0.0" ? "127.0.0.1" : options_.listen.host, port_}; }
  // Stops accepting; open sessions finish their in-flight response and close.
  void stop();
  // Blocks until `shutdown` becomes true, then stops.
  void serve(const std::atomic<bool>& shutdown);

  std::uint64_t requests_served() const { return requests_.load(); }
  std::uint64_t sessions_opened() const { return next_session_.load(); }
  const DecoderHost& host() const { return *host_; }

 private:
  struct Session {
    std::thread thread;
    std::shared_ptr<std::atomic<bool>> finished;
  };

  void accept_loop();
  void run_session(Socket socket, std::uint64_t id);
  void log_request(std::uint64_t session, std::uint8_t tag, std::int64_t micros, std::optional<float> loss);
  void reap_sessions(bool all);

  std::shared_ptr<const DecoderHost> host_;
  ServerOptions options_;
  std::unique_ptr<Listener> listener_;
  std::uint16_t port_ = 0;
  std::atomic<bool> stopping_{false};
  std::atomic<std::uint64_t> requests_{0};
  std::atomic<std::uint64_t> next_session_{0};
  std::thread acceptor_;
  std::mutex sessions_mutex_;
  std::vector<Session> sessions_;
  std::mutex log_mutex_;
  std::ofstream log_;
};

}  // namespace splitfed
