#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

namespace treeg {

// Deterministic stream of random numbers. Streams are derived from a master
// seed plus a tuple of counters (step, parent, branch, purpose), so parallel
// consumers can never observe each other's draws and replay is exact.
//
// All distributions are implemented explicitly on top of the raw 64-bit
// generator; nothing here depends on libstdc++'s unspecified distribution
// algorithms, so a (seed, counters) pair pins every sample bit-exactly.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed) : state_(seed) {
    // splitmix64 warm-up so nearby seeds decorrelate immediately.
    next_u64();
    next_u64();
  }

  std::uint64_t next_u64() {
    state_ += 0x9e3779b97f4a7c15ull;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  // Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform on (0, 1]; safe as a log() argument.
  double uniform_pos() {
    return (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;
  }

  // Standard normal via Box-Muller. Two uniforms per call; no cached spare,
  // so the draw count per call is fixed.
  double normal() {
    const double u1 = uniform_pos();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    return r * std::cos(6.283185307179586476925286766559 * u2);
  }

  void fill_normal(std::span<double> out) {
    for (double& v : out) v = normal();
  }

  double gumbel() { return -std::log(-std::log(uniform_pos())); }

  // Inverse-CDF categorical draw over `probs` in fixed index order; ties and
  // rounding resolve toward the last index.
  int categorical(std::span<const double> probs) {
    const double u = uniform();
    double cum = 0.0;
    const int n = static_cast<int>(probs.size());
    for (int i = 0; i < n; ++i) {
      cum += probs[i];
      if (u < cum) return i;
    }
    return n - 1;
  }

 private:
  std::uint64_t state_;
};

namespace detail {

inline std::uint64_t mix_u64(std::uint64_t h, std::uint64_t v) {
  h ^= v + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2);
  h *= 0xff51afd7ed558ccdull;
  h ^= h >> 33;
  return h;
}

}  // namespace detail

// Counter-based stream splitting: the derived seed is a hash of the master
// seed and the counter tuple, so evaluation order cannot change any stream.
inline RngStream derive_stream(std::uint64_t master, std::uint64_t purpose,
                               std::uint64_t step = 0, std::uint64_t parent = 0,
                               std::uint64_t branch = 0) {
  std::uint64_t h = 0x2545f4914f6cdd1dull;
  h = detail::mix_u64(h, master);
  h = detail::mix_u64(h, purpose);
  h = detail::mix_u64(h, step);
  h = detail::mix_u64(h, parent);
  h = detail::mix_u64(h, branch);
  return RngStream(h);
}

// Stream purposes used by the samplers and the search engine.
namespace stream_purpose {
inline constexpr std::uint64_t kInit = 1;
inline constexpr std::uint64_t kStepNoise = 2;
inline constexpr std::uint64_t kValueMc = 3;
inline constexpr std::uint64_t kDestination = 4;
inline constexpr std::uint64_t kGumbel = 5;
}  // namespace stream_purpose

}  // namespace treeg
