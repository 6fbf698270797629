#pragma once

#include <cstdint>
#include <string_view>

namespace pgt {

// SplitMix64 (Steele/Lea/Flood constants). Every random draw in the project
// goes through this generator so datasets, initialization and training runs
// are bit-reproducible across platforms and languages.
class SplitMix64 {
 public:
  explicit SplitMix64(uint64_t seed) : state_(seed) {}

  uint64_t next_u64() {
    state_ += 0x9E3779B97F4A7C15ull;
    uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  // uniform in [0,1), 53-bit resolution
  double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // uniform in [lo,hi]
  double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

  // uniform integer in [lo,hi], inclusive
  int64_t uniform_int(int64_t lo, int64_t hi) {
    return lo + static_cast<int64_t>(next_u64() % static_cast<uint64_t>(hi - lo + 1));
  }

  bool bernoulli(double p) { return next_double() < p; }

 private:
  uint64_t state_;
};

// FNV-1a, used to derive independent substreams from (seed, name) pairs.
inline uint64_t fnv1a(std::string_view s) {
  uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

inline SplitMix64 substream(uint64_t seed, std::string_view name) {
  return SplitMix64(seed ^ fnv1a(name));
}

}  // namespace pgt
