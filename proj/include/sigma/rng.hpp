#pragma once

#include <cstdint>
#include <random>
#include <span>

namespace sigma {

/// Seeded pseudo-random stream. Uniforms come from mt19937_64 (fully
/// specified by the standard) and normals from the Marsaglia polar method,
/// so a given seed yields the same sequence regardless of standard library.
///
/// Independent sub-streams are derived by key with `derive`, which hashes
/// (seed, keys...) through splitmix64. Parallel or federated consumers use
/// derived streams instead of sharing one engine.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  /// Stream keyed by (seed, a, b). Same arguments, same stream.
  static Rng derive(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0);

  std::uint64_t seed() const noexcept { return seed_; }

  std::uint64_t next_u64();
  /// Uniform on [0, 1) with 53 bits of resolution.
  double uniform();
  double uniform(double lo, double hi);
  double normal();
  void fill_normal(std::span<double> out);
  /// Uniform integer on [0, n).
  std::uint64_t below(std::uint64_t n);

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

std::uint64_t splitmix64(std::uint64_t x);

}  // namespace sigma
