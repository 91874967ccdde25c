#include "splitfed/server.hpp"

#include <chrono>
#include <cstdio>
#include <ctime>

#include "splitfed/layers.hpp"
#include "splitfed/metrics.hpp"
#include "splitfed/serialize.hpp"

namespace splitfed {

DecoderHost::DecoderHost(DecoderSpec spec, ParamSet decoder_params, std::optional<ParamSet> source_encoder,
                         Options options)
    : decoder_(spec),
      params_(std::move(decoder_params)),
      hash_(splitfed::decoder_hash(params_)),
      encoder_bytes_(source_encoder ? std::optional<Bytes>(serialize_paramset(*source_encoder)) : std::nullopt),
      options_(options) {
  require_aligned(decoder_.init(0), params_, "hosted decoder");
}

std::pair<std::size_t, std::size_t> DecoderHost::image_contract() const {
  const auto d = decoder_.output_dims();
  return {d[1], d[2]};
}

HelloAck DecoderHost::hello_ack() const {
  const auto& l = latent_contract();
  const auto [h, w] = image_contract();
  return {static_cast<std::uint32_t>(l.channels), static_cast<std::uint32_t>(l.height),
          static_cast<std::uint32_t>(l.width), static_cast<std::uint32_t>(h), static_cast<std::uint32_t>(w)};
}

void DecoderHost::check_latents(const Tensor& latents) const {
  const auto& l = latent_contract();
  if (latents.rank() != 4 || latents.dim(1) != l.channels || latents.dim(2) != l.height ||
      latents.dim(3) != l.width) {
    throw ContractError(error_code::shape_contract, "shape contract: latents must be [B," + to_string(l) +
                                                        "], got " + dims_to_string(latents.dims()));
  }
}

TrainStepResult DecoderHost::handle_train_step(const Tensor& latents, const Tensor& masks) const {
  check_latents(latents);
  const auto [h, w] = image_contract();
  const std::size_t batch = latents.dim(0);
  if (masks.dims() != Dims{batch, 1, h, w}) {
    throw ContractError(error_code::shape_contract,
                        "shape contract: masks must be " + dims_to_string({batch, 1, h, w}) + ", got " +
                            dims_to_string(masks.dims()));
  }
  try {
    require_binary(masks, "masks");
  } catch (const ValidationError& e) {
    throw ContractError(error_code::non_binary_mask, e.what());
  }

  const auto items = unstack(latents);
  std::vector<Tensor> logits;
  std::vector<NetworkCache> caches;
  logits.reserve(batch);
  caches.reserve(batch);
  for (const auto& latent : items) {
    auto [out, cache] = decoder_.forward(params_, latent);
    logits.push_back(std::move(out));
    caches.push_back(std::move(cache));
  }
  auto loss = bce_from_logits(stack(logits), masks);
  const auto d_logits = unstack(loss.d_logits);
  std::vector<Tensor> d_latents;
  d_latents.reserve(batch);
  for (std::size_t b = 0; b < batch; ++b) {
    auto grads = decoder_.backward(params_, caches[b], d_logits[b], {true, !options_.skip_decoder_grads});
    d_latents.push_back(std::move(grads.d_latent));
    // grads.params goes out of scope here: the decoder is frozen.
  }
  return {loss.loss, stack(d_latents)};
}

Tensor DecoderHost::handle_infer(const Tensor& latents) const {
  check_latents(latents);
  std::vector<Tensor> probs;
  for (const auto& latent : unstack(latents)) probs.push_back(sigmoid(decoder_.infer(params_, latent)));
  return stack(probs);
}

Message DecoderHost::handle_encoder_init() const {
  if (!encoder_bytes_) return ErrorReply{error_code::no_encoder_hosted, "no encoder hosted"};
  return EncoderWeights{*encoder_bytes_};
}

Message DecoderHost::handle(const Message& request, bool handshake_done) const {
  if (std::holds_alternative<Hello>(request)) return hello_ack();
  if (!handshake_done) return ErrorReply{error_code::handshake_required, "handshake required"};
  try {
    if (const auto* step = std::get_if<TrainStep>(&request)) {
      auto r = handle_train_step(step->latents, step->masks);
      return TrainResp{r.loss, std::move(r.d_latents)};
    }
    if (const auto* inf = std::get_if<Infer>(&request)) return InferResp{handle_infer(inf->latents)};
    if (std::holds_alternative<GetEncoderInit>(request)) return handle_encoder_init();
    if (std::holds_alternative<GetDecoderHash>(request)) return DecoderHash{hash_};
  } catch (const ContractError& e) {
    return ErrorReply{e.code(), e.what()};
  }
  return ErrorReply{error_code::unexpected_message,
                    "unexpected " + tag_name(static_cast<std::uint8_t>(tag_of(request))) + " from client"};
}

Server::Server(std::shared_ptr<const DecoderHost> host, ServerOptions options)
    : host_(std::move(host)), options_(std::move(options)) {
  if (options_.log_path) {
    if (options_.log_path->has_parent_path()) std::filesystem::create_directories(options_.log_path->parent_path());
    log_.open(*options_.log_path, std::ios::app);
    if (!log_) throw ConfigError("cannot open log file " + options_.log_path->string());
  }
}

Server::~Server() { stop(); }

void Server::start() {
  listener_ = std::make_unique<Listener>(options_.listen);
  port_ = listener_->port();
  stopping_ = false;
  acceptor_ = std::thread([this] { accept_loop(); });
}

void Server::stop() {
  stopping_ = true;
  if (acceptor_.joinable()) acceptor_.join();
  reap_sessions(true);
  if (listener_) listener_->close();
}

void Server::serve(const std::atomic<bool>& shutdown) {
  if (!listener_) start();
  while (!shutdown.load()) std::this_thread::sleep_for(std::chrono::milliseconds(options_.poll_interval_ms));
  stop();
}

void Server::accept_loop() {
  while (!stopping_.load()) {
    Socket s = listener_->accept(options_.poll_interval_ms);
    reap_sessions(false);
    if (!s.valid()) continue;
    const std::uint64_t id = next_session_.fetch_add(1) + 1;
    auto finished = std::make_shared<std::atomic<bool>>(false);
    std::thread t([this, sock = std::move(s), id, finished]() mutable {
      run_session(std::move(sock), id);
      *finished = true;
    });
    std::lock_guard lock(sessions_mutex_);
    sessions_.push_back({std::move(t), std::move(finished)});
  }
}

void Server::reap_sessions(bool all) {
  std::vector<Session> done;
  {
    std::lock_guard lock(sessions_mutex_);
    for (auto it = sessions_.begin(); it != sessions_.end();) {
      if (all || it->finished->load()) {
        done.push_back(std::move(*it));
        it = sessions_.erase(it);
      } else {
        ++it;
      }
    }
  }
  for (auto& s : done) {
    if (s.thread.joinable()) s.thread.join();
  }
}

void Server::run_session(Socket socket, std::uint64_t id) {
  SocketStream stream(std::move(socket));
  bool handshake_done = false;
  try {
    while (!stopping_.load()) {
      if (!stream.wait_readable(options_.poll_interval_ms)) continue;
      std::optional<Frame> frame;
      try {
        frame = read_frame(stream);
      } catch (const DecodeError& e) {
        // Oversize or zero length: framing is lost, so reply and drop the session.
        write_message(stream, ErrorReply{error_code::malformed_message, e.what()});
        break;
      }
      if (!frame) break;  // clean close between frames
      const auto started = std::chrono::steady_clock::now();
      Message reply;
      std::optional<float> loss;
      try {
        const Message request = from_frame(*frame);
        reply = host_->handle(request, handshake_done);
        if (std::holds_alternative<Hello>(request)) handshake_done = true;
        if (const auto* r = std::get_if<TrainResp>(&reply)) loss = r->loss;
      } catch (const DecodeError& e) {
        reply = ErrorReply{error_code::malformed_message, e.what()};
      } catch (const std::exception& e) {
        reply = ErrorReply{error_code::internal, std::string("internal error: ") + e.what()};
      }
      requests_.fetch_add(1);
      write_message(stream, reply);
      const auto micros =
          std::chrono::duration_cast<std::chrono::microseconds>(std::chrono::steady_clock::now() - started).count();
      log_request(id, frame->tag, micros, loss);
    }
  } catch (const ConnectionError&) {
    // Peer went away mid-frame or mid-write; nothing to answer.
  }
  stream.socket().shutdown_write();
}

void Server::log_request(std::uint64_t session, std::uint8_t tag, std::int64_t micros, std::optional<float> loss) {
  if (!log_.is_open()) return;
  const auto now = std::chrono::system_clock::now();
  const auto secs = std::chrono::system_clock::to_time_t(now);
  const auto millis =
      std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count() % 1000;
  std::tm tm{};
  gmtime_r(&secs, &tm);
  char stamp[32];
  std::strftime(stamp, sizeof stamp, "%Y-%m-%dT%H:%M:%S", &tm);
  char line[256];
  int n = std::snprintf(line, sizeof line, "%s.%03dZ session=%llu tag=0x%02X %s latency_us=%lld", stamp,
                        static_cast<int>(millis), static_cast<unsigned long long>(session), tag,
                        tag_name(tag).c_str(), static_cast<long long>(micros));
  if (loss && n > 0 && static_cast<std::size_t>(n) < sizeof line) {
    std::snprintf(line + n, sizeof line - static_cast<std::size_t>(n), " loss=%.6f", static_cast<double>(*loss));
  }
  std::lock_guard lock(log_mutex_);
  log_ << line << '\n';
  log_.flush();
}

}  // namespace splitfed
