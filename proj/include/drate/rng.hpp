#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace drate {

/// Mixes a 64-bit value with the SplitMix64 finalizer.
std::uint64_t mix64(std::uint64_t x) noexcept;

/// Derives an independent child seed from a parent seed and a tag.
///
/// Substreams are addressed by a path of integers (replication index, cell
/// key, stream purpose); each step folds one component into the running
/// seed with mix64. Distinct paths give statistically unrelated streams and
/// the mapping never depends on the order in which streams are created.
std::uint64_t derive_seed(std::uint64_t parent, std::uint64_t tag) noexcept;
std::uint64_t derive_seed(std::uint64_t parent, std::string_view purpose) noexcept;

/// Seeded generator used throughout the library.
///
/// Wraps std::mt19937_64 with the handful of draws the simulations need.
/// Draw sequences are reproducible for a given standard library build.
class Rng {
 public:
  using Engine = std::mt19937_64;

  explicit Rng(std::uint64_t seed) : seed_(seed), engine_(seed) {}

  std::uint64_t seed() const noexcept { return seed_; }
  Engine& engine() noexcept { return engine_; }

  double uniform() { return unif_(engine_); }
  double normal() { return norm_(engine_); }
  bool bernoulli(double prob) { return uniform() < prob; }
  std::uint64_t next_u64() { return engine_(); }

  /// Uniform index in [0, bound).
  std::size_t index(std::size_t bound) {
    return std::uniform_int_distribution<std::size_t>(0, bound - 1)(engine_);
  }

  /// Child generator for a named purpose, seeded from this generator's seed.
  Rng child(std::string_view purpose) const { return Rng(derive_seed(seed_, purpose)); }
  Rng child(std::uint64_t tag) const { return Rng(derive_seed(seed_, tag)); }

 private:
  std::uint64_t seed_;
  Engine engine_;
  std::uniform_real_distribution<double> unif_{0.0, 1.0};
  std::normal_distribution<double> norm_{0.0, 1.0};
};

}  // namespace drate
