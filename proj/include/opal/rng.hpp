// Portable pseudo-random streams. The generator is xoshiro256** seeded by
// expanding a 64-bit seed with splitmix64, so any implementation of those two
// published algorithms reproduces the same sequence:
//
//   splitmix64: z = (state += 0x9E3779B97F4A7C15);
//               z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9;
//               z = (z ^ (z >> 27)) * 0x94D049BB133111EB;
//               return z ^ (z >> 31);
//   xoshiro256**: result = rotl(s1 * 5, 7) * 9, then the standard state update.
//
// Uniform doubles take the top 53 bits: (next() >> 11) * 2^-53.
// Normals use Box-Muller on two uniforms, returning only the cosine branch.

#pragma once

#include <array>
#include <cstdint>

namespace opal {

class Rng {
 public:
  explicit Rng(uint64_t seed);

  uint64_t next_u64();
  /// Uniform in [0, 1).
  double uniform();
  /// Uniform integer in [0, bound), bound > 0. Rejection sampling keeps it unbiased.
  uint64_t below(uint64_t bound);
  /// Standard normal sample.
  double normal();

 private:
  std::array<uint64_t, 4> s_{};
};

uint64_t splitmix64(uint64_t& state);

}  // namespace opal
