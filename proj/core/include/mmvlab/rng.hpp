#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>

namespace mmvlab::rng {

/// Philox4x32-10 (Salmon et al., "Parallel random numbers: as easy as 1, 2, 3").
/// Stateless: the output is a pure function of (counter, key), so any draw
/// can be regenerated without replaying a sequence.
class Philox4x32 {
 public:
  using Counter = std::array<std::uint32_t, 4>;
  using Key = std::array<std::uint32_t, 2>;

  static constexpr Counter generate(Counter ctr, Key key) {
    for (int r = 0; r < 10; ++r) {
      if (r > 0) {
        key[0] += kWeyl0;
        key[1] += kWeyl1;
      }
      ctr = round(ctr, key);
    }
    return ctr;
  }

 private:
  static constexpr std::uint32_t kMul0 = 0xD2511F53u;
  static constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
  static constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
  static constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;

  static constexpr Counter round(const Counter& c, const Key& k) {
    const std::uint64_t p0 = static_cast<std::uint64_t>(kMul0) * c[0];
    const std::uint64_t p1 = static_cast<std::uint64_t>(kMul1) * c[2];
    const auto hi0 = static_cast<std::uint32_t>(p0 >> 32);
    const auto lo0 = static_cast<std::uint32_t>(p0);
    const auto hi1 = static_cast<std::uint32_t>(p1 >> 32);
    const auto lo1 = static_cast<std::uint32_t>(p1);
    return {hi1 ^ c[1] ^ k[0], lo1, hi0 ^ c[3] ^ k[1], lo0};
  }
};

/// Identifies one independent family of draws. Streams separate the
/// simulation ensemble from the regression ensembles and from jump draws.
struct StreamKey {
  std::uint64_t seed = 0;
  std::uint32_t stream = 0;
};

/// Two uniforms in (0, 1) for draw slot (path, index, block).
inline std::array<double, 2> uniform_pair(StreamKey key, std::uint64_t path, std::uint32_t index,
                                          std::uint32_t block) {
  const Philox4x32::Key k{static_cast<std::uint32_t>(key.seed),
                          static_cast<std::uint32_t>(key.seed >> 32)};
  const Philox4x32::Counter c{block, index, static_cast<std::uint32_t>(path),
                              (static_cast<std::uint32_t>(path >> 32) & 0xFFFFu) |
                                  (key.stream << 16)};
  const auto out = Philox4x32::generate(c, k);
  auto to_unit = [](std::uint32_t hi, std::uint32_t lo) {
    const std::uint64_t bits = ((static_cast<std::uint64_t>(hi) << 32) | lo) >> 11;
    return (static_cast<double>(bits) + 0.5) * 0x1.0p-53;
  };
  return {to_unit(out[0], out[1]), to_unit(out[2], out[3])};
}

/// Box-Muller pair of standard normals for the same slot.
inline std::array<double, 2> normal_pair(StreamKey key, std::uint64_t path, std::uint32_t index,
                                         std::uint32_t block) {
  const auto u = uniform_pair(key, path, index, block);
  const double radius = std::sqrt(-2.0 * std::log(u[0]));
  const double angle = 2.0 * std::numbers::pi * u[1];
  return {radius * std::cos(angle), radius * std::sin(angle)};
}

}  // namespace mmvlab::rng
