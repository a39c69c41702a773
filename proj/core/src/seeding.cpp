#include "semtraj/seeding.hpp"

namespace semtraj {

std::uint64_t mix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

std::uint64_t derive_seed(std::uint64_t master, std::string_view stage,
                          std::uint64_t stream) {
  const std::uint64_t h = mix64(master ^ fnv1a64(stage));
  return mix64(h ^ (stream * 0xD1B54A32D192ED03ull + 0x632BE59BD9B4E019ull));
}

std::uint64_t SplitMix64::next() {
  state_ += 0x9E3779B97F4A7C15ull;
  std::uint64_t z = state_;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

std::uint64_t SplitMix64::below(std::uint64_t n) { return next() % n; }

double SplitMix64::unit() {
  return static_cast<double>(next() >> 11) * 0x1.0p-53;
}

}  // namespace semtraj
