#pragma once

#include <array>
#include <cstdint>

namespace seqgeo {

// xoshiro256** seeded through splitmix64. Every sampler below is defined in
// terms of raw 64-bit outputs so streams are identical on every platform;
// <random> distributions are implementation-defined and are not used.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t next_u64();

  // Uniform in [0, 1) with 53 random bits.
  double uniform();

  // Uniform integer in [0, bound) by rejection; bound must be > 0.
  std::uint64_t below(std::uint64_t bound);

  // Standard normal via Box-Muller (one output per call, the pair is not cached).
  double normal();

  // Independent child stream; the parent advances by one draw.
  Rng split();

 private:
  std::array<std::uint64_t, 4> state_;
};

// Derives a stream seed from a root seed and a small integer tag, so separate
// concerns (init, shuffling, masks) never share draws.
std::uint64_t derive_seed(std::uint64_t root, std::uint64_t tag);

}  // namespace seqgeo
