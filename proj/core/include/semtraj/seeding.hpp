#pragma once

#include <cstdint>
#include <string_view>

namespace semtraj {

/// SplitMix64 finalizer; full-avalanche 64-bit mix.
std::uint64_t mix64(std::uint64_t x);

/// FNV-1a over a byte string.
std::uint64_t fnv1a64(std::string_view bytes);

/// Deterministic, collision-resistant seed for (master seed, stage name,
/// stream index). The derivation is frozen: the value for (0, "synth", 0)
/// is recorded in tests/golden/derive_seed.txt and must never change.
std::uint64_t derive_seed(std::uint64_t master, std::string_view stage,
                          std::uint64_t stream);

/// Small counter PRNG for inner loops (RANSAC sampling, edge dropout).
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next();

  /// Uniform in [0, n), n > 0.
  std::uint64_t below(std::uint64_t n);

  /// Uniform double in [0, 1).
  double unit();

 private:
  std::uint64_t state_;
};

}  // namespace semtraj
