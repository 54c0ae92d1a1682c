#pragma once

#include <cmath>
#include <concepts>
#include <cstdint>
#include <numbers>
#include <random>
#include <string_view>

namespace wet {

// Anything that can feed Row_Gen: open-interval uniforms and bounded integers.
template <class R>
concept UniformSource = requires(R& r, std::uint64_t bound) {
  { r.uniform01() } -> std::convertible_to<double>;
  { r.below(bound) } -> std::convertible_to<std::uint64_t>;
};

template <class R>
concept GaussianSource = UniformSource<R> && requires(R& r) {
  { r.normal() } -> std::convertible_to<double>;
};

// SplitMix64 finalizer, used to derive independent child seeds.
constexpr std::uint64_t mix_seed(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) noexcept {
  return mix_seed(seed ^ mix_seed(stream + 0x632be59bd9b4e019ULL));
}

/// Deterministic random stream.
///
/// The raw engine is std::mt19937_64, whose output sequence is fixed by the
/// C++ standard. Every derived quantity (uniforms, bounded integers, normals)
/// is computed here from raw 64-bit words rather than through <random>
/// distributions, whose algorithms are implementation-defined. Streams are
/// therefore reproducible across compilers and standard libraries.
class Rng {
 public:
  static constexpr std::string_view kId = "mt19937_64/v1";

  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform on the open interval (0, 1) with 53 bits of resolution.
  double uniform01() {
    for (;;) {
      const double u = static_cast<double>(engine_() >> 11) * 0x1.0p-53;
      if (u > 0.0) return u;
    }
  }

  // Uniform integer in [0, bound) without modulo bias.
  std::uint64_t below(std::uint64_t bound) {
    if (bound <= 1) return 0;
    const std::uint64_t threshold = (0 - bound) % bound;
    for (;;) {
      const std::uint64_t r = engine_();
      if (r >= threshold) return r % bound;
    }
  }

  // Standard normal via Box-Muller; one variate per call.
  double normal() {
    const double u1 = uniform01();
    const double u2 = uniform01();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

 private:
  std::mt19937_64 engine_;
};

static_assert(GaussianSource<Rng>);

}  // namespace wet
