#pragma once

#include <array>
#include <cstdint>

namespace matchlab {

/// Philox4x32-10 counter-based generator (Salmon et al., SC'11). Stateless:
/// every output block is a pure function of (key, counter), so streams can be
/// addressed directly by replica and point index.
class Philox4x32 {
 public:
  using Counter = std::array<std::uint32_t, 4>;
  using Key = std::array<std::uint32_t, 2>;

  explicit Philox4x32(std::uint64_t seed)
      : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)} {}

  Counter operator()(Counter ctr) const;

  /// Two uniform doubles in [0,1) with 53 random bits each.
  std::array<double, 2> uniform_pair(Counter ctr) const;

 private:
  Key key_;
};

/// SplitMix64 finalizer, used to derive independent seeds.
std::uint64_t mix64(std::uint64_t x);

/// Seed for an independent stream identified by (base, tag).
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t tag) {
  return mix64(base ^ mix64(tag + 0x9e3779b97f4a7c15ULL));
}

}  // namespace matchlab
