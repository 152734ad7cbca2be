// Deterministic counter-seeded PRNG (xoshiro256++ over a splitmix64 seeding
// chain). The same (seed, stream) pair yields the same sequence on every
// platform; parallel tasks take disjoint stream ids instead of sharing state.
#pragma once

#include <array>
#include <cstdint>

namespace bvt {

class Rng {
 public:
  explicit Rng(std::uint64_t seed, std::uint64_t stream = 0);

  std::uint64_t next_u64();
  // Uniform in [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi);
  // Standard normal via Box-Muller; two uniforms per draw, no cached spare.
  double gaussian();

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream() const { return stream_; }
  // Independent generator for a sub-task of this one.
  Rng fork(std::uint64_t substream) const;

 private:
  std::array<std::uint64_t, 4> state_{};
  std::uint64_t seed_ = 0;
  std::uint64_t stream_ = 0;
};

}  // namespace bvt
