#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <vector>

namespace fedsl {

namespace detail {

// SplitMix64 finalizer (Steele et al.). Integer-only, so the stream is
// bit-identical on every platform.
constexpr std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace detail

// Counter-based generator: a Weyl counter plus the SplitMix64 mix. Streams
// for independent purposes (per client, per round, per layer) are derived by
// folding integer tags into the seed, never by sharing one stream.
class Rng {
 public:
  Rng() : state_(0) {}
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    state_ += 0x9e3779b97f4a7c15ULL;
    return detail::mix64(state_);
  }

  // Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n) via the multiply-shift reduction.
  std::uint64_t uniform_int(std::uint64_t n) {
    return static_cast<std::uint64_t>(
        (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
  }

  // Box-Muller, one variate per call; no cached spare so the draw count per
  // call is fixed.
  double normal() {
    double u1 = uniform();
    double u2 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  // Fisher-Yates.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(uniform_int(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::uint64_t state_;
};

// Derives a child seed from a parent seed and integer tags.
inline std::uint64_t derive_seed(std::uint64_t seed,
                                 std::initializer_list<std::uint64_t> tags) {
  std::uint64_t h = detail::mix64(seed);
  for (std::uint64_t t : tags) h = detail::mix64(h ^ detail::mix64(t));
  return h;
}

template <typename... Tags>
Rng derive_rng(std::uint64_t seed, Tags... tags) {
  return Rng(derive_seed(seed, {static_cast<std::uint64_t>(tags)...}));
}

// Stream tags; keep values stable, they are part of the determinism contract.
namespace stream {
constexpr std::uint64_t kInit = 1;     // per-layer weight init
constexpr std::uint64_t kData = 2;     // synthetic dataset
constexpr std::uint64_t kShuffle = 3;  // per-client epoch shuffles
constexpr std::uint64_t kDropout = 4;  // per-client per-round dropout masks
constexpr std::uint64_t kQuant = 5;    // per-client per-round quantizer coins
constexpr std::uint64_t kDistance = 6; // per-client link distances
}  // namespace stream

}  // namespace fedsl
