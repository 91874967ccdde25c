#pragma once

#include <cstdint>
#include <string_view>

namespace splitfed {

// xoshiro256** seeded through splitmix64. Distributions are implemented here
// rather than taken from <random> so generated data is identical across
// standard library implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  // Independent stream keyed by (seed, label, index); used so any sample or
  // parameter block can be regenerated on its own.
  static Rng stream(std::uint64_t seed, std::string_view label, std::uint64_t index = 0);

  std::uint64_t next();
  // Uniform in [0, 1).
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);
  // Uniform integer in [lo, hi].
  std::int64_t between(std::int64_t lo, std::int64_t hi);
  double normal();

 private:
  std::uint64_t s_[4];
  bool has_spare_ = false;
  double spare_ = 0.0;
};

std::uint64_t splitmix64(std::uint64_t& state);
// FNV-1a; stable label hashing for stream derivation.
std::uint64_t hash_label(std::string_view label);
// Deterministic child seed for a named sub-task.
std::uint64_t derive_seed(std::uint64_t seed, std::string_view label);

}  // namespace splitfed
