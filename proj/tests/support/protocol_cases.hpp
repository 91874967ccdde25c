// Golden frames and decoder fuzzing shared by the unit tests and the
// acceptance runner.
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "splitfed/wire.hpp"

namespace ref {

struct GoldenCase {
  std::string name;
  splitfed::Message message;
  splitfed::Bytes frame;  // from tests/golden/messages.txt
};

// The messages behind each golden frame, paired with the file's bytes.
std::vector<GoldenCase> golden_cases();

struct FuzzStats {
  std::size_t cases = 0;
  std::size_t rejected = 0;        // decode threw a splitfed::Error
  std::size_t accepted = 0;        // decoded; re-encoding matched the input
  std::size_t non_canonical = 0;   // decoded, but re-encoding differed
  std::size_t unexpected = 0;      // any other exception type
};

// Mutates the golden frames (bit flips, byte overwrites, truncation,
// extension, length-field edits) and feeds each result to decode_message.
FuzzStats fuzz_decode(std::size_t cases, std::uint64_t seed);

}  // namespace ref
