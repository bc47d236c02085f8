#pragma once

#include <cstdint>
#include <random>

namespace perfpred {

/// Seeded random stream. Streams never share state; independent streams are
/// derived with child(), which mixes the parent seed with a key.
class Stream {
 public:
  using engine_type = std::mt19937_64;

  explicit Stream(std::uint64_t seed);

  std::uint64_t seed() const noexcept { return seed_; }

  /// Deterministic child stream for `key`; does not advance this stream.
  Stream child(std::uint64_t key) const;

  double normal(double mean = 0.0, double sd = 1.0);
  double uniform(double lo = 0.0, double hi = 1.0);
  bool bernoulli(double p);
  std::size_t index(std::size_t n);

  engine_type& engine() noexcept { return engine_; }

 private:
  std::uint64_t seed_;
  engine_type engine_;
  std::normal_distribution<double> std_normal_{0.0, 1.0};
};

/// SplitMix64 finalizer; used for seed derivation.
std::uint64_t mix64(std::uint64_t x) noexcept;

}  // namespace perfpred
