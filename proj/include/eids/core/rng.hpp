#pragma once

#include <cmath>
#include <cstdint>

namespace eids {

// Deterministic splitmix64 stream. All randomness in the toolkit flows
// through this class so that runs are bit-reproducible across platforms;
// std::random distributions are implementation-defined and never used.
//
// Sub-streams are derived by hashing counters into a root seed
// (see Rng::derive), so any (epoch, sample, stage) draw sequence can be
// reproduced in isolation without replaying the run.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1), 53 bits of mantissa.
  double uniform01() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  // Uniform in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  // Uniform integer in [0, n] inclusive. Modulo bias is negligible for the
  // small ranges used here (n << 2^32).
  std::uint64_t uniform_int(std::uint64_t n) {
    return n == 0 ? 0 : next_u64() % (n + 1);
  }

  // Box-Muller; the sine mate is discarded to keep the generator stateless
  // beyond its 64-bit counter.
  double normal(double mean, double sigma) {
    double u1 = 1.0 - uniform01();  // (0, 1], keeps log() finite
    double u2 = uniform01();
    double r = std::sqrt(-2.0 * std::log(u1));
    return mean + sigma * r * std::cos(6.283185307179586476925287 * u2);
  }

  static std::uint64_t mix(std::uint64_t h, std::uint64_t v) {
    v += 0x9e3779b97f4a7c15ull;
    v = (v ^ (v >> 30)) * 0xbf58476d1ce4e5b9ull;
    v = (v ^ (v >> 27)) * 0x94d049bb133111ebull;
    h ^= (v ^ (v >> 31)) + 0x9e3779b97f4a7c15ull + (h << 12) + (h >> 4);
    return h;
  }

  // Derive an independent sub-stream from a root seed and up to four
  // counters (epoch, sample index, pipeline stage, ...).
  static Rng derive(std::uint64_t seed, std::uint64_t a = 0,
                    std::uint64_t b = 0, std::uint64_t c = 0,
                    std::uint64_t d = 0) {
    std::uint64_t h = seed;
    h = mix(h, a);
    h = mix(h, b);
    h = mix(h, c);
    h = mix(h, d);
    return Rng(h);
  }

 private:
  std::uint64_t state_;
};

// FNV-1a, for turning short string tags into sub-stream counters.
constexpr std::uint64_t stream_tag(const char* s) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  while (*s) {
    h ^= static_cast<unsigned char>(*s++);
    h *= 0x100000001b3ull;
  }
  return h;
}

}  // namespace eids
