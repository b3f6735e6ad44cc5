#pragma once

#include <cstdint>

namespace dexhand {

/**
 * @brief Counter-based deterministic random generator (splitmix64, version 1).
 *
 * Output i of stream `seed` is mix64(seed + (i+1) * 0x9E3779B97F4A7C15).
 * The generator is pure random-access: any draw can be produced without
 * producing the earlier ones, so work partitioned across workers by index
 * range yields bit-identical results regardless of scheduling. The algorithm
 * is frozen; a change would bump the version constant and every downstream
 * artifact hash.
 */
class SplitMix64 {
 public:
  static constexpr int kVersion = 1;
  static constexpr std::uint64_t kGamma = 0x9E3779B97F4A7C15ull;

  explicit SplitMix64(std::uint64_t seed) : seed_(seed) {}

  static std::uint64_t mix(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  /// i-th output of this stream, independent of any other call.
  std::uint64_t at(std::uint64_t i) const { return mix(seed_ + (i + 1) * kGamma); }

  /// i-th output mapped to a double in [0, 1).
  double uniform_at(std::uint64_t i) const { return to_unit(at(i)); }

  std::uint64_t next_u64() { return at(counter_++); }
  double next_double() { return to_unit(next_u64()); }
  double next_in(double lo, double hi) { return lo + next_double() * (hi - lo); }

  /// Uniform integer in [0, n).
  std::uint64_t next_below(std::uint64_t n) { return n == 0 ? 0 : next_u64() % n; }

  /// Derived stream that does not overlap the parent for distinct ids.
  SplitMix64 substream(std::uint64_t id) const { return SplitMix64(mix(seed_ ^ mix(id + 0x632BE59BD9B4E019ull))); }

  std::uint64_t seed() const { return seed_; }

 private:
  static double to_unit(std::uint64_t x) { return static_cast<double>(x >> 11) * 0x1.0p-53; }

  std::uint64_t seed_;
  std::uint64_t counter_ = 0;
};

}  // namespace dexhand
