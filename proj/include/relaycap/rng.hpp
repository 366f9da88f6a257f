#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <limits>

namespace relaycap {

// SplitMix64 step; used only to expand seeds.
constexpr std::uint64_t splitmix64(std::uint64_t& state) noexcept {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// xoshiro256** (Blackman & Vigna). Satisfies UniformRandomBitGenerator, so it
// also works with <random> distributions. The simulator draws several hundred
// variates per slot; mt19937_64 was the bottleneck.
class Xoshiro256 {
 public:
  using result_type = std::uint64_t;

  explicit Xoshiro256(std::uint64_t seed = 0) noexcept {
    std::uint64_t sm = seed;
    for (auto& word : s_) word = splitmix64(sm);
  }

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

  result_type operator()() noexcept {
    const std::uint64_t result = std::rotl(s_[1] * 5, 7) * 9;
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = std::rotl(s_[3], 45);
    return result;
  }

 private:
  std::uint64_t s_[4];
};

// Random source for one simulation replication. Each (seed, stream) pair gives
// an independent, reproducible sequence.
class Rng {
 public:
  Rng(std::uint64_t seed, std::uint64_t stream) : engine_(mix(seed, stream)) {}

  std::uint64_t next() noexcept { return engine_(); }

  // Uniform integer in [0, bound), bound > 0 (Lemire's multiply-and-reject).
  std::uint64_t below(std::uint64_t bound) noexcept {
    std::uint64_t x = engine_();
    unsigned __int128 m = static_cast<unsigned __int128>(x) * bound;
    auto low = static_cast<std::uint64_t>(m);
    if (low < bound) {
      const std::uint64_t threshold = (0 - bound) % bound;
      while (low < threshold) {
        x = engine_();
        m = static_cast<unsigned __int128>(x) * bound;
        low = static_cast<std::uint64_t>(m);
      }
    }
    return static_cast<std::uint64_t>(m >> 64);
  }

  // Uniform integer in [0, bound), 0 < bound < 2^32, consuming 32-bit halves
  // of the underlying 64-bit output.
  std::uint32_t below32(std::uint32_t bound) noexcept {
    std::uint64_t m = static_cast<std::uint64_t>(next32()) * bound;
    auto low = static_cast<std::uint32_t>(m);
    if (low < bound) {
      const std::uint32_t threshold = (0U - bound) % bound;
      while (low < threshold) {
        m = static_cast<std::uint64_t>(next32()) * bound;
        low = static_cast<std::uint32_t>(m);
      }
    }
    return static_cast<std::uint32_t>(m >> 32);
  }

  // Uniform double in [0, 1) with 53 random bits.
  double uniform() noexcept { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  bool bernoulli(double p) noexcept { return uniform() < p; }

  bool coin() noexcept { return (engine_() >> 63) != 0; }

  // Number of failures before the first success of a Bernoulli(p) sequence,
  // 0 < p <= 1. Saturates at int64 max for vanishing p.
  std::int64_t geometric(double p) noexcept {
    if (p >= 1.0) return 0;
    // 1 - uniform() lies in (0, 1], so the log is finite.
    const double draws = std::floor(std::log1p(-uniform()) / std::log1p(-p));
    constexpr auto cap = static_cast<double>(std::numeric_limits<std::int64_t>::max() / 2);
    return draws >= cap ? static_cast<std::int64_t>(cap) : static_cast<std::int64_t>(draws);
  }

 private:
  static std::uint64_t mix(std::uint64_t seed, std::uint64_t stream) noexcept {
    std::uint64_t state = seed;
    std::uint64_t a = splitmix64(state);
    state = stream ^ 0x6a09e667f3bcc909ULL;
    std::uint64_t b = splitmix64(state);
    return a ^ std::rotl(b, 32);
  }

  std::uint32_t next32() noexcept {
    if (have_half_) {
      have_half_ = false;
      return static_cast<std::uint32_t>(half_);
    }
    half_ = engine_();
    have_half_ = true;
    return static_cast<std::uint32_t>(half_ >> 32);
  }

  Xoshiro256 engine_;
  std::uint64_t half_ = 0;
  bool have_half_ = false;
};

}  // namespace relaycap
