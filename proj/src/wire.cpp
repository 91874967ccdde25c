#include "splitfed/wire.hpp"

#include <openssl/evp.h>

#include <cstdio>
#include <memory>

#include "splitfed/serialize.hpp"

namespace splitfed {

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};

Bytes encode_payload(const Message& m) {
  ByteWriter w;
  std::visit(overloaded{
                 [&](const Hello& x) { w.string16(x.client_id); },
                 [&](const HelloAck& x) {
                   w.u32(x.latent_channels);
                   w.u32(x.latent_height);
                   w.u32(x.latent_width);
                   w.u32(x.image_height);
                   w.u32(x.image_width);
                 },
                 [&](const TrainStep& x) {
                   write_tensor(w, x.latents);
                   write_tensor(w, x.masks);
                 },
                 [&](const TrainResp& x) {
                   w.f32(x.loss);
                   write_tensor(w, x.d_latents);
                 },
                 [&](const Infer& x) { write_tensor(w, x.latents); },
                 [&](const InferResp& x) { write_tensor(w, x.probabilities); },
                 [&](const GetEncoderInit&) {},
                 [&](const EncoderWeights& x) { w.raw(x.paramset); },
                 [&](const GetDecoderHash&) {},
                 [&](const DecoderHash& x) { w.raw(x.digest); },
                 [&](const ErrorReply& x) {
                   w.u16(x.code);
                   w.string16(x.message);
                 },
             },
             m);
  return std::move(w).take();
}

Tensor read_payload_tensor(ByteReader& r) {
  try {
    return read_tensor(r);
  } catch (const TruncatedError& e) {
    throw DecodeError("tensor size mismatch: payload ends inside tensor header");
  } catch (const FormatError& e) {
    throw DecodeError(std::string("tensor size mismatch: ") + e.what());
  }
}

Message decode_payload(std::uint8_t tag, std::span<const std::uint8_t> payload) {
  ByteReader r(payload, 5);
  auto finish = [&](Message m) -> Message {
    if (!r.done()) {
      throw DecodeError("tensor size mismatch: " + std::to_string(r.remaining()) +
                        " unexpected trailing payload byte(s) in " + tag_name(tag));
    }
    return m;
  };
  try {
    switch (static_cast<Tag>(tag)) {
      case Tag::hello:
        return finish(Hello{r.string16()});
      case Tag::hello_ack: {
        HelloAck a;
        a.latent_channels = r.u32();
        a.latent_height = r.u32();
        a.latent_width = r.u32();
        a.image_height = r.u32();
        a.image_width = r.u32();
        return finish(a);
      }
      case Tag::train_step: {
        auto latents = read_payload_tensor(r);
        auto masks = read_payload_tensor(r);
        return finish(TrainStep{std::move(latents), std::move(masks)});
      }
      case Tag::train_resp: {
        const float loss = r.f32();
        return finish(TrainResp{loss, read_payload_tensor(r)});
      }
      case Tag::infer:
        return finish(Infer{read_payload_tensor(r)});
      case Tag::infer_resp:
        return finish(InferResp{read_payload_tensor(r)});
      case Tag::get_encoder_init:
        return finish(GetEncoderInit{});
      case Tag::encoder_weights: {
        auto raw = r.raw(r.remaining());
        return finish(EncoderWeights{Bytes(raw.begin(), raw.end())});
      }
      case Tag::get_decoder_hash:
        return finish(GetDecoderHash{});
      case Tag::decoder_hash: {
        DecoderHash h;
        auto raw = r.raw(h.digest.size());
        std::copy(raw.begin(), raw.end(), h.digest.begin());
        return finish(h);
      }
      case Tag::error: {
        ErrorReply e;
        e.code = r.u16();
        e.message = r.string16();
        return finish(e);
      }
    }
  } catch (const TruncatedError& e) {
    throw DecodeError("incomplete frame: " + tag_name(tag) + " payload needs " +
                      std::to_string(e.needed()) + " more byte(s)");
  }
  char buf[40];
  std::snprintf(buf, sizeof buf, "unknown tag 0x%02X", tag);
  throw DecodeError(buf);
}

void put_u32(Bytes& out, std::uint32_t v) {
  for (int shift = 0; shift < 32; shift += 8) out.push_back(static_cast<std::uint8_t>(v >> shift));
}

std::uint32_t get_u32(const std::uint8_t* p) {
  return static_cast<std::uint32_t>(p[0]) | static_cast<std::uint32_t>(p[1]) << 8 |
         static_cast<std::uint32_t>(p[2]) << 16 | static_cast<std::uint32_t>(p[3]) << 24;
}

void check_length(std::uint32_t length) {
  if (length == 0) throw DecodeError("frame length 0 leaves no room for a tag");
  if (length > kMaxFrameLength) {
    throw DecodeError("frame length " + std::to_string(length) + " exceeds the 64 MiB limit");
  }
}

}  // namespace

Tag tag_of(const Message& m) {
  static constexpr Tag kTags[] = {Tag::hello,      Tag::hello_ack,        Tag::train_step,
                                  Tag::train_resp, Tag::infer,            Tag::infer_resp,
                                  Tag::get_encoder_init, Tag::encoder_weights, Tag::get_decoder_hash,
                                  Tag::decoder_hash, Tag::error};
  return kTags[m.index()];
}

std::string tag_name(std::uint8_t tag) {
  switch (static_cast<Tag>(tag)) {
    case Tag::hello: return "HELLO";
    case Tag::hello_ack: return "HELLO_ACK";
    case Tag::train_step: return "TRAIN_STEP";
    case Tag::train_resp: return "TRAIN_RESP";
    case Tag::infer: return "INFER";
    case Tag::infer_resp: return "INFER_RESP";
    case Tag::get_encoder_init: return "GET_ENCODER_INIT";
    case Tag::encoder_weights: return "ENCODER_WEIGHTS";
    case Tag::get_decoder_hash: return "GET_DECODER_HASH";
    case Tag::decoder_hash: return "DECODER_HASH";
    case Tag::error: return "ERROR";
  }
  char buf[8];
  std::snprintf(buf, sizeof buf, "0x%02X", tag);
  return buf;
}

Frame to_frame(const Message& m) {
  Frame f{static_cast<std::uint8_t>(tag_of(m)), encode_payload(m)};
  if (f.payload.size() + 1 > kMaxFrameLength) throw ValidationError("message exceeds the 64 MiB frame limit");
  return f;
}

Message from_frame(const Frame& frame) { return decode_payload(frame.tag, frame.payload); }

Bytes encode_message(const Message& m) {
  const Frame f = to_frame(m);
  Bytes out;
  out.reserve(5 + f.payload.size());
  put_u32(out, static_cast<std::uint32_t>(f.payload.size() + 1));
  out.push_back(f.tag);
  out.insert(out.end(), f.payload.begin(), f.payload.end());
  return out;
}

Message decode_message(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4) {
    throw DecodeError("incomplete frame: need " + std::to_string(4 - bytes.size()) +
                      " more byte(s) for the length prefix");
  }
  const std::uint32_t length = get_u32(bytes.data());
  check_length(length);
  const std::size_t have = bytes.size() - 4;
  if (have < length) {
    throw DecodeError("incomplete frame: need " + std::to_string(length - have) + " more byte(s)");
  }
  if (have > length) {
    throw DecodeError("frame followed by " + std::to_string(have - length) + " trailing byte(s)");
  }
  return decode_payload(bytes[4], bytes.subspan(5));
}

namespace {

// Reads exactly buf.size() bytes. Returns the number read before EOF.
std::size_t read_fully(ByteStream& stream, std::span<std::uint8_t> buf) {
  std::size_t got = 0;
  while (got < buf.size()) {
    const std::size_t n = stream.read_some(buf.subspan(got));
    if (n == 0) break;
    got += n;
  }
  return got;
}

}  // namespace

std::optional<Frame> read_frame(ByteStream& stream) {
  std::array<std::uint8_t, 4> header{};
  const std::size_t got = read_fully(stream, header);
  if (got == 0) return std::nullopt;
  if (got < header.size()) {
    throw ConnectionError("incomplete frame: peer closed after " + std::to_string(got) +
                          " of 4 length bytes");
  }
  const std::uint32_t length = get_u32(header.data());
  check_length(length);
  Bytes body(length);
  const std::size_t body_got = read_fully(stream, body);
  if (body_got < length) {
    throw ConnectionError("incomplete frame: peer closed after " + std::to_string(body_got) + " of " +
                          std::to_string(length) + " bytes, " + std::to_string(length - body_got) +
                          " more needed");
  }
  Frame f;
  f.tag = body[0];
  f.payload.assign(body.begin() + 1, body.end());
  return f;
}

void write_frame(ByteStream& stream, const Frame& frame) {
  if (frame.payload.size() + 1 > kMaxFrameLength) throw ValidationError("frame exceeds the 64 MiB limit");
  Bytes out;
  out.reserve(5 + frame.payload.size());
  put_u32(out, static_cast<std::uint32_t>(frame.payload.size() + 1));
  out.push_back(frame.tag);
  out.insert(out.end(), frame.payload.begin(), frame.payload.end());
  stream.write_all(out);
}

std::optional<Message> read_message(ByteStream& stream) {
  auto f = read_frame(stream);
  if (!f) return std::nullopt;
  return from_frame(*f);
}

void write_message(ByteStream& stream, const Message& m) { write_frame(stream, to_frame(m)); }

Digest sha256(std::span<const std::uint8_t> bytes) {
  Digest d{};
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), d.data(), &len, EVP_sha256(), nullptr) != 1 || len != d.size()) {
    throw Error("SHA-256 computation failed");
  }
  return d;
}

Digest decoder_hash(const ParamSet& params) { return sha256(serialize_paramset(params)); }

std::string digest_hex(const Digest& d) { return to_hex(d); }

}  // namespace splitfed
