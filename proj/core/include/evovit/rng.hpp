#pragma once

#include <array>
#include <cstdint>

namespace evovit {

// xoshiro256** seeded through splitmix64. Draws depend only on the seed and
// the call sequence, never on the platform's standard library.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0);

  std::uint64_t seed() const { return seed_; }

  std::uint64_t next_u64();
  // Uniform in [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi);
  // Uniform integer in [0, n), n > 0; rejection-sampled, no modulo bias.
  std::uint64_t below(std::uint64_t n);
  // Standard normal (Box-Muller; the second variate is cached).
  double normal();
  // Normal(0, std) truncated to [-2 std, 2 std] by resampling.
  double truncated_normal(double std);

 private:
  std::uint64_t seed_;
  std::array<std::uint64_t, 4> state_{};
  bool has_spare_ = false;
  double spare_ = 0.0;
};

std::uint64_t splitmix64(std::uint64_t& state);

}  // namespace evovit
