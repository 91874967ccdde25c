#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <variant>

#include "splitfed/bytes.hpp"
#include "splitfed/tensor.hpp"

namespace splitfed {

// Frame layout: u32 LE length (= 1 + payload bytes), u8 tag, payload.
// Frames above kMaxFrameLength are rejected before any payload is read.
inline constexpr std::uint32_t kMaxFrameLength = 64u * 1024u * 1024u;

enum class Tag : std::uint8_t {
  hello = 0x01,
  hello_ack = 0x02,
  train_step = 0x10,
  train_resp = 0x11,
  infer = 0x20,
  infer_resp = 0x21,
  get_encoder_init = 0x30,
  encoder_weights = 0x31,
  get_decoder_hash = 0x40,
  decoder_hash = 0x41,
  error = 0x7F,
};

using Digest = std::array<std::uint8_t, 32>;

// Strings (client id, error text) are encoded as u16 length + UTF-8 bytes.
struct Hello {
  std::string client_id;
  friend bool operator==(const Hello&, const Hello&) = default;
};

// Contracts the server enforces: latent [c,h,w] and mask/image [h,w].
struct HelloAck {
  std::uint32_t latent_channels = 0;
  std::uint32_t latent_height = 0;
  std::uint32_t latent_width = 0;
  std::uint32_t image_height = 0;
  std::uint32_t image_width = 0;
  friend bool operator==(const HelloAck&, const HelloAck&) = default;
};

// Latents [B,c,h,w] and masks [B,1,H,W]. Raw images never travel.
struct TrainStep {
  Tensor latents;
  Tensor masks;
  friend bool operator==(const TrainStep&, const TrainStep&) = default;
};

struct TrainResp {
  float loss = 0.0f;
  Tensor d_latents;
  friend bool operator==(const TrainResp&, const TrainResp&) = default;
};

struct Infer {
  Tensor latents;
  friend bool operator==(const Infer&, const Infer&) = default;
};

struct InferResp {
  Tensor probabilities;
  friend bool operator==(const InferResp&, const InferResp&) = default;
};

struct GetEncoderInit {
  friend bool operator==(const GetEncoderInit&, const GetEncoderInit&) = default;
};

// Payload is an SFPS blob, carried verbatim.
struct EncoderWeights {
  Bytes paramset;
  friend bool operator==(const EncoderWeights&, const EncoderWeights&) = default;
};

struct GetDecoderHash {
  friend bool operator==(const GetDecoderHash&, const GetDecoderHash&) = default;
};

// SHA-256 of the decoder's SFPS serialisation.
struct DecoderHash {
  Digest digest{};
  friend bool operator==(const DecoderHash&, const DecoderHash&) = default;
};

struct ErrorReply {
  std::uint16_t code = 0;
  std::string message;
  friend bool operator==(const ErrorReply&, const ErrorReply&) = default;
};

using Message = std::variant<Hello, HelloAck, TrainStep, TrainResp, Infer, InferResp, GetEncoderInit,
                             EncoderWeights, GetDecoderHash, DecoderHash, ErrorReply>;

namespace error_code {
inline constexpr std::uint16_t handshake_required = 0x0001;
inline constexpr std::uint16_t shape_contract = 0x0002;
inline constexpr std::uint16_t non_binary_mask = 0x0003;
inline constexpr std::uint16_t no_encoder_hosted = 0x0004;
inline constexpr std::uint16_t malformed_message = 0x0005;
inline constexpr std::uint16_t unexpected_message = 0x0006;
inline constexpr std::uint16_t internal = 0x00FF;
}  // namespace error_code

// Decoding failures: truncation, unknown tags, size mismatches, oversize frames.
class DecodeError : public Error {
 public:
  using Error::Error;
};

struct Frame {
  std::uint8_t tag = 0;
  Bytes payload;
  friend bool operator==(const Frame&, const Frame&) = default;
};

Tag tag_of(const Message& m);
std::string tag_name(std::uint8_t tag);

Frame to_frame(const Message& m);
Message from_frame(const Frame& frame);

// Full frame bytes (length, tag, payload). Canonical: one encoding per message.
Bytes encode_message(const Message& m);
// Parses exactly one complete frame; trailing or missing bytes are errors.
Message decode_message(std::span<const std::uint8_t> bytes);

// Ordered, reliable byte stream. read_some returns 0 only at end of stream.
class ByteStream {
 public:
  virtual ~ByteStream() = default;
  virtual std::size_t read_some(std::span<std::uint8_t> buffer) = 0;
  virtual void write_all(std::span<const std::uint8_t> bytes) = 0;
};

// Returns nullopt on a clean close between frames. A close part-way through
// a frame throws ConnectionError ("incomplete frame"); an oversize length
// throws DecodeError before the payload is read.
std::optional<Frame> read_frame(ByteStream& stream);
void write_frame(ByteStream& stream, const Frame& frame);

std::optional<Message> read_message(ByteStream& stream);
void write_message(ByteStream& stream, const Message& m);

Digest sha256(std::span<const std::uint8_t> bytes);
Digest decoder_hash(const ParamSet& params);
std::string digest_hex(const Digest& d);

}  // namespace splitfed
