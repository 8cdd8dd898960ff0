#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace escox {

/// Stateless splitmix64 finalizer; good avalanche for seed derivation.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

/// Derives an independent stream seed from a master seed and up to three
/// stream coordinates. All randomness in the project flows through this:
/// every module draws from Rng(derive_seed(master, tag, ...)) so results
/// never depend on call order or thread scheduling.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a = 0,
                                 std::uint64_t b = 0, std::uint64_t c = 0) {
  std::uint64_t h = splitmix64(seed);
  h = splitmix64(h ^ (a * 0xD1B54A32D192ED03ull + 0x2545F4914F6CDD1Dull));
  h = splitmix64(h ^ (b * 0xD1B54A32D192ED03ull + 0x2545F4914F6CDD1Dull));
  h = splitmix64(h ^ (c * 0xD1B54A32D192ED03ull + 0x2545F4914F6CDD1Dull));
  return h;
}

// Stream tags used with derive_seed.
namespace rng_tag {
inline constexpr std::uint64_t kDataGen = 0x01;
inline constexpr std::uint64_t kCensorProbe = 0x02;
inline constexpr std::uint64_t kNetInit = 0x03;
inline constexpr std::uint64_t kDropout = 0x04;
inline constexpr std::uint64_t kSubsample = 0x05;
inline constexpr std::uint64_t kBaseNet = 0x06;
inline constexpr std::uint64_t kBaseTrain = 0x07;
inline constexpr std::uint64_t kTestPoints = 0x08;
inline constexpr std::uint64_t kReplication = 0x09;
inline constexpr std::uint64_t kOverlapRep = 0x0A;
}  // namespace rng_tag

/// Deterministic RNG with explicit samplers. Distributions are implemented
/// here rather than via <random> adaptors so a given seed always yields the
/// same stream regardless of standard-library version.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(splitmix64(seed)) {}

  std::uint64_t next_u64() { return eng_(); }

  /// Uniform on [0, 1), 53-bit resolution.
  double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  /// Uniform on the open interval (0, 1); safe as a log/inverse-CDF input.
  double uniform_open01() {
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
  }

  /// Uniform integer in [0, n). Lemire multiply-shift; bias is O(n / 2^64).
  std::uint64_t below(std::uint64_t n) {
    return static_cast<std::uint64_t>(
        (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
  }

  /// Standard normal via Marsaglia polar rejection (second value discarded).
  double normal() {
    for (;;) {
      const double u = 2.0 * uniform01() - 1.0;
      const double v = 2.0 * uniform01() - 1.0;
      const double s = u * u + v * v;
      if (s > 0.0 && s < 1.0) return u * std::sqrt(-2.0 * std::log(s) / s);
    }
  }

  /// N(0,1) conditioned on |X| <= bound, by rejection.
  double truncated_normal(double bound) {
    for (;;) {
      const double x = normal();
      if (std::abs(x) <= bound) return x;
    }
  }

  /// Exponential with the given rate; rate 0 yields +infinity (no event).
  double exponential(double rate) {
    if (rate <= 0.0) return std::numeric_limits<double>::infinity();
    return -std::log(uniform_open01()) / rate;
  }

 private:
  std::mt19937_64 eng_;
};

}  // namespace escox
