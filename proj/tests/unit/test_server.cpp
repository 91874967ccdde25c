#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <thread>

#include "doctest.h"
#include "reference.hpp"
#include "splitfed/client.hpp"
#include "splitfed/layers.hpp"
#include "splitfed/metrics.hpp"
#include "splitfed/serialize.hpp"
#include "splitfed/server.hpp"

using namespace splitfed;

namespace {

ParamSet zero_biases(ParamSet p) {
  for (auto& e : p) {
    if (e.name.ends_with(".bias")) e.value = Tensor(e.value.dims(), 0.0f);
  }
  return p;
}

std::shared_ptr<const DecoderHost> make_host(std::uint64_t seed = 1, bool with_encoder = true) {
  const Decoder dec;
  std::optional<ParamSet> enc;
  if (with_encoder) enc = build_encoder({}, seed + 100).params;
  return std::make_shared<const DecoderHost>(dec.spec(), dec.init(seed), enc);
}

Tensor latents(std::size_t b, std::uint64_t seed) { return ref::random_tensor({b, 32, 4, 4}, seed, 0, 1); }
Tensor masks(std::size_t b, std::uint64_t seed) { return ref::random_mask({b, 1, 32, 32}, seed); }

// Raw client without the RemoteDecoder conveniences.
struct RawClient {
  explicit RawClient(const Endpoint& e) : stream(connect_tcp(e)) {}
  Message call(const Message& m) {
    write_message(stream, m);
    auto r = read_message(stream);
    REQUIRE(r.has_value());
    return *r;
  }
  SocketStream stream;
};

}  // namespace

TEST_CASE("zero latent and zero-bias decoder give loss ln 2") {
  const Decoder dec;
  const DecoderHost host(dec.spec(), zero_biases(dec.init(3)));
  const auto r = host.handle_train_step(Tensor({2, 32, 4, 4}), masks(2, 4));
  CHECK(std::abs(r.loss - std::numbers::ln2) < 1e-6);
  const Tensor probs = host.handle_infer(Tensor({2, 32, 4, 4}));
  for (float v : probs.values()) CHECK(v == 0.5f);
}

TEST_CASE("train step equals the local decoder + loss + backward exactly") {
  const Decoder dec;
  const auto params = dec.init(5);
  const DecoderHost host(dec.spec(), params);
  const Tensor lat = latents(3, 6), m = masks(3, 7);

  std::vector<Tensor> logits;
  std::vector<NetworkCache> caches;
  for (const auto& l : unstack(lat)) {
    auto [z, c] = dec.forward(params, l);
    logits.push_back(z);
    caches.push_back(std::move(c));
  }
  const auto loss = bce_from_logits(stack(logits), m);
  const auto dz = unstack(loss.d_logits);
  std::vector<Tensor> expected;
  for (std::size_t b = 0; b < 3; ++b) expected.push_back(dec.backward(params, caches[b], dz[b]).d_latent);

  const auto r = host.handle_train_step(lat, m);
  CHECK(r.loss == loss.loss);
  CHECK(r.d_latents == stack(expected));
  const auto again = host.handle_train_step(lat, m);
  CHECK(again.loss == r.loss);
  CHECK(again.d_latents == r.d_latents);

  const DecoderHost fast(dec.spec(), params, std::nullopt, DecoderHostOptions{true});
  CHECK(fast.handle_train_step(lat, m).d_latents == r.d_latents);
}

TEST_CASE("infer equals the local forward and stays inside (0,1)") {
  const Decoder dec;
  const auto params = dec.init(8);
  const DecoderHost host(dec.spec(), params);
  const Tensor lat = ref::random_tensor({2, 32, 4, 4}, 9, -50, 50);
  const Tensor probs = host.handle_infer(lat);
  const auto items = unstack(lat);
  std::vector<Tensor> expected;
  for (const auto& l : items) expected.push_back(sigmoid(dec.infer(params, l)));
  CHECK(probs == stack(expected));
  for (float v : probs.values()) CHECK((v > 0.0f && v < 1.0f));
}

TEST_CASE("contract violations") {
  const auto host = make_host();
  auto code_of = [&](const Message& m) {
    const auto reply = host->handle(m, true);
    REQUIRE(std::holds_alternative<ErrorReply>(reply));
    return std::get<ErrorReply>(reply).code;
  };
  CHECK(code_of(TrainStep{Tensor({2, 16, 4, 4}), masks(2, 1)}) == error_code::shape_contract);
  CHECK(code_of(TrainStep{latents(2, 1), masks(3, 1)}) == error_code::shape_contract);
  CHECK(code_of(TrainStep{latents(2, 1), Tensor({2, 1, 16, 16})}) == error_code::shape_contract);
  CHECK(code_of(TrainStep{latents(2, 1), Tensor({2, 1, 32, 32}, 0.5f)}) == error_code::non_binary_mask);
  CHECK(code_of(Infer{Tensor({32, 4, 4})}) == error_code::shape_contract);
  CHECK(code_of(HelloAck{}) == error_code::unexpected_message);
  const auto pre = host->handle(GetDecoderHash{}, false);
  CHECK(std::get<ErrorReply>(pre).code == error_code::handshake_required);
}

TEST_CASE("encoder shipping") {
  const auto host = make_host(1, true);
  const auto reply = host->handle(GetEncoderInit{}, true);
  REQUIRE(std::holds_alternative<EncoderWeights>(reply));
  const ParamSet shipped = parse_paramset(std::get<EncoderWeights>(reply).paramset);
  CHECK(shipped == build_encoder({}, 101).params);
  CHECK(sha256(std::get<EncoderWeights>(reply).paramset) == sha256(serialize_paramset(build_encoder({}, 101).params)));

  const auto bare = make_host(1, false);
  const auto err = bare->handle(GetEncoderInit{}, true);
  REQUIRE(std::holds_alternative<ErrorReply>(err));
  CHECK(std::get<ErrorReply>(err).code == error_code::no_encoder_hosted);
}

TEST_CASE("live server: handshake rule, hash, logging") {
  const auto log = std::filesystem::temp_directory_path() / "splitfed_test_server" / "server.log";
  std::filesystem::remove(log);
  const auto host = make_host();
  Server server(host, ServerOptions{{"127.0.0.1", 0}, log});
  server.start();
  {
    RawClient raw(server.endpoint());
    const auto early = raw.call(TrainStep{latents(1, 1), masks(1, 2)});
    REQUIRE(std::holds_alternative<ErrorReply>(early));
    CHECK(std::get<ErrorReply>(early).code == error_code::handshake_required);
    CHECK(std::get<ErrorReply>(early).message == "handshake required");
    CHECK(std::get<HelloAck>(raw.call(Hello{"raw"})) == HelloAck{32, 4, 4, 32, 32});
    CHECK(std::get<DecoderHash>(raw.call(GetDecoderHash{})).digest == host->decoder_hash());
    CHECK(std::holds_alternative<TrainResp>(raw.call(TrainStep{latents(1, 1), masks(1, 2)})));
  }
  {
    // An oversize frame is answered with an ERROR and the session is dropped.
    RawClient raw(server.endpoint());
    ByteWriter w;
    w.u32(kMaxFrameLength + 1);
    w.u8(0x10);
    raw.stream.write_all(w.bytes());
    const auto reply = read_message(raw.stream);
    REQUIRE(reply.has_value());
    CHECK(std::get<ErrorReply>(*reply).code == error_code::malformed_message);
  }
  server.stop();
  std::ifstream in(log);
  std::string line;
  bool saw_loss = false;
  std::size_t lines = 0;
  while (std::getline(in, line)) {
    ++lines;
    CHECK(line.find("session=") != std::string::npos);
    CHECK(line.find("latency_us=") != std::string::npos);
    if (line.find("tag=0x10") != std::string::npos && line.find("loss=") != std::string::npos) saw_loss = true;
  }
  CHECK(lines == 4);
  CHECK(saw_loss);
}

TEST_CASE("four concurrent clients x 50 train steps leave the decoder untouched") {
  const auto host = make_host(11);
  const Digest before = decoder_hash(host->decoder_params());
  Server server(host, ServerOptions{});
  server.start();
  std::vector<std::thread> threads;
  std::atomic<int> ok{0};
  std::vector<std::vector<float>> losses(4);
  for (int c = 0; c < 4; ++c) {
    threads.emplace_back([&, c] {
      try {
        RemoteDecoder remote(server.endpoint(), "client-" + std::to_string(c));
        for (int i = 0; i < 50; ++i) {
          losses[c].push_back(remote.train_step(latents(2, 1000 + i), masks(2, 2000 + i)).loss);
        }
        CHECK(remote.decoder_hash() == host->decoder_hash());
        ++ok;
      } catch (const std::exception& e) {
        MESSAGE("client " << c << " failed: " << e.what());
      }
    });
  }
  for (auto& t : threads) t.join();
  CHECK(ok == 4);
  // Responses depend only on the request: every client saw the same losses.
  for (int c = 1; c < 4; ++c) CHECK(losses[c] == losses[0]);
  CHECK(decoder_hash(host->decoder_params()) == before);
  CHECK(host->decoder_hash() == before);
  CHECK(server.requests_served() == 4 * (1 + 50 + 1));
  server.stop();
}

TEST_CASE("clients with different encoder sizes share one server") {
  const auto host = make_host(12);
  Server server(host, ServerOptions{});
  server.start();
  for (auto v : {EncoderVariant::small, EncoderVariant::large}) {
    EncoderSpec spec;
    spec.variant = v;
    const auto built = build_encoder(spec, 3);
    RemoteDecoder remote(server.endpoint(), to_string(v));
    CHECK(remote.latent_contract() == built.latent);
    const Tensor lat = stack(std::vector{built.encoder.infer(built.params, ref::random_tensor({1, 32, 32}, 4, 0, 1))});
    const auto r = remote.train_step(lat, masks(1, 5));
    CHECK(std::isfinite(r.loss));
  }
  server.stop();
}

TEST_CASE("shutdown drains the session and the client sees a close") {
  const auto host = make_host(13);
  Server server(host, ServerOptions{});
  server.start();
  RawClient raw(server.endpoint());
  CHECK(std::holds_alternative<HelloAck>(raw.call(Hello{"x"})));
  server.stop();
  CHECK_FALSE(read_message(raw.stream).has_value());
}
