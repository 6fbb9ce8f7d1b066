#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <vector>

namespace mtard {

/// splitmix64 step; used both as a PRNG core and as a key-derivation mixer.
inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Deterministic stream keyed by (root seed, purpose tag, counters).
/// Streams derived from the same key are identical across runs and platforms,
/// which is what makes training resumable without serializing RNG state.
class Rng {
public:
  explicit Rng(std::uint64_t key) : state_(key ^ 0xa0761d6478bd642fULL) {
    // Warm up so nearby keys decorrelate.
    for (int i = 0; i < 4; ++i) splitmix64(state_);
  }

  static std::uint64_t derive_key(std::uint64_t root, std::uint64_t tag, std::uint64_t a = 0,
                                  std::uint64_t b = 0) {
    std::uint64_t s = root;
    splitmix64(s);
    s ^= tag * 0x9e3779b97f4a7c15ULL;
    splitmix64(s);
    s ^= a + 0x632be59bd9b4e019ULL;
    splitmix64(s);
    s ^= b + 0xd6e8feb86659fd93ULL;
    return splitmix64(s);
  }

  std::uint64_t next_u64() { return splitmix64(state_); }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n); n must be > 0.
  std::uint64_t below(std::uint64_t n) { return next_u64() % n; }

  /// Standard normal via Box-Muller (deterministic, stdlib-free).
  double normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

private:
  std::uint64_t state_;
};

// Stream tags used across the trainer and evaluation paths.
namespace rng_tag {
inline constexpr std::uint64_t init = 1;
inline constexpr std::uint64_t shuffle = 2;
inline constexpr std::uint64_t attack = 3;
inline constexpr std::uint64_t eval = 4;
inline constexpr std::uint64_t data = 5;
}  // namespace rng_tag

}  // namespace mtard
