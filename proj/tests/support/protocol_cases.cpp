#include "protocol_cases.hpp"

#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include "splitfed/rng.hpp"
#include "splitfed/serialize.hpp"

#ifndef SPLITFED_GOLDEN_DIR
#error "SPLITFED_GOLDEN_DIR must point at tests/golden"
#endif

namespace ref {

using namespace splitfed;

namespace {

std::map<std::string, Bytes> load_golden_file() {
  std::ifstream in(std::string(SPLITFED_GOLDEN_DIR) + "/messages.txt");
  if (!in) throw std::runtime_error("cannot open golden vectors in " SPLITFED_GOLDEN_DIR);
  std::map<std::string, Bytes> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream fields(line);
    std::string name, chunk, hex;
    fields >> name;
    while (fields >> chunk) hex += chunk;
    out[name] = from_hex(hex);
  }
  return out;
}

}  // namespace

std::vector<GoldenCase> golden_cases() {
  ParamSet weights;
  weights.add("a", Tensor({1}, 42.0f));
  DecoderHash hash;
  for (std::size_t i = 0; i < hash.digest.size(); ++i) hash.digest[i] = static_cast<std::uint8_t>(i);

  std::vector<GoldenCase> cases{
      {"hello", Hello{"c2"}, {}},
      {"hello_ack", HelloAck{32, 4, 4, 32, 32}, {}},
      {"train_step",
       TrainStep{Tensor({1, 1, 1, 2}, std::vector<float>{1.0f, -2.0f}), Tensor({1, 1, 1, 1}, 1.0f)},
       {}},
      {"train_resp", TrainResp{0.5f, Tensor({1}, -0.25f)}, {}},
      {"infer", Infer{Tensor({1}, 42.0f)}, {}},
      {"infer_resp", InferResp{Tensor({1, 1, 1, 1}, 0.5f)}, {}},
      {"get_encoder_init", GetEncoderInit{}, {}},
      {"encoder_weights", EncoderWeights{serialize_paramset(weights)}, {}},
      {"get_decoder_hash", GetDecoderHash{}, {}},
      {"decoder_hash", hash, {}},
      {"error", ErrorReply{0x0002, "shape"}, {}},
  };
  const auto file = load_golden_file();
  for (auto& c : cases) c.frame = file.at(c.name);
  return cases;
}

FuzzStats fuzz_decode(std::size_t cases, std::uint64_t seed) {
  const auto golden = golden_cases();
  Rng rng(seed);
  FuzzStats stats;
  for (std::size_t i = 0; i < cases; ++i) {
    Bytes b = golden[rng.below(golden.size())].frame;
    const auto edits = 1 + rng.below(4);
    for (std::uint64_t e = 0; e < edits; ++e) {
      switch (rng.below(6)) {
        case 0:
          if (!b.empty()) b[rng.below(b.size())] ^= static_cast<std::uint8_t>(1u << rng.below(8));
          break;
        case 1:
          if (!b.empty()) b[rng.below(b.size())] = static_cast<std::uint8_t>(rng.below(256));
          break;
        case 2:
          b.resize(rng.below(b.size() + 1));
          break;
        case 3:
          for (auto n = rng.below(8); n > 0; --n) b.push_back(static_cast<std::uint8_t>(rng.below(256)));
          break;
        case 4:
          // Rewrite the length field, sometimes to something huge.
          if (b.size() >= 4) {
            const std::uint32_t len = rng.below(2) ? static_cast<std::uint32_t>(rng.next())
                                                   : static_cast<std::uint32_t>(rng.below(b.size() + 4));
            for (int k = 0; k < 4; ++k) b[k] = static_cast<std::uint8_t>(len >> (8 * k));
          }
          break;
        default:
          // Inflate a dims field inside a tensor or string length.
          if (b.size() > 6) {
            const auto pos = 5 + rng.below(b.size() - 5);
            b[pos] = 0xFF;
          }
          break;
      }
    }
    ++stats.cases;
    try {
      const Message m = decode_message(b);
      if (encode_message(m) == b) {
        ++stats.accepted;
      } else {
        ++stats.non_canonical;
      }
    } catch (const splitfed::Error&) {
      ++stats.rejected;
    } catch (...) {
      ++stats.unexpected;
    }
  }
  return stats;
}

}  // namespace ref
