#pragma once

#include <cmath>
#include <cstdint>
#include <limits>

namespace zrpperc {

/// SplitMix64 finalizer. Bijective on 64-bit words.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Derive an independent key from a parent key and a tag (replica index,
/// ladder level, purpose code, ...).
constexpr std::uint64_t derive_key(std::uint64_t key, std::uint64_t tag) noexcept {
  return mix64(mix64(key) ^ mix64(tag + 0x632be59bd9b4e019ULL));
}

/// Counter-based generator: the i-th output is a pure function of (key, i).
/// Satisfies UniformRandomBitGenerator, but library code draws through
/// uniform()/exponential() so results do not depend on the standard
/// library's distribution implementations.
class CounterRng {
 public:
  using result_type = std::uint64_t;

  explicit constexpr CounterRng(std::uint64_t key, std::uint64_t counter = 0) noexcept
      : key_(mix64(key)), counter_(counter) {}

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

  constexpr result_type operator()() noexcept { return at(counter_++); }

  /// Output at an arbitrary counter position, without advancing.
  constexpr result_type at(std::uint64_t i) const noexcept {
    return mix64(key_ ^ mix64(i * 0xd1342543de82ef95ULL + 1));
  }

  /// Uniform on [0,1) with 53 random bits.
  double uniform() noexcept { return to_unit(operator()()); }

  /// Uniform on (0,1].
  double uniform_open0() noexcept { return 1.0 - uniform(); }

  double exponential(double rate) noexcept { return -std::log(uniform_open0()) / rate; }

  std::uint64_t counter() const noexcept { return counter_; }

  static constexpr double to_unit(std::uint64_t bits) noexcept {
    return static_cast<double>(bits >> 11) * 0x1.0p-53;
  }

 private:
  std::uint64_t key_;
  std::uint64_t counter_;
};

}  // namespace zrpperc
