#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>

namespace logkw {

/// Philox4x32-10 counter-based generator (Salmon et al., SC'11). Every draw
/// is a pure function of (key, counter), so any (path, step) noise can be
/// regenerated independently of thread layout or visiting order.
class Philox4x32 {
 public:
  using Counter = std::array<std::uint32_t, 4>;
  using Key = std::array<std::uint32_t, 2>;

  static constexpr Counter apply(Counter ctr, Key key) noexcept {
    for (int round = 0; round < 10; ++round) {
      if (round > 0) {
        key[0] += kWeyl0;
        key[1] += kWeyl1;
      }
      const std::uint64_t p0 = std::uint64_t{kMul0} * ctr[0];
      const std::uint64_t p1 = std::uint64_t{kMul1} * ctr[2];
      const auto hi0 = static_cast<std::uint32_t>(p0 >> 32);
      const auto lo0 = static_cast<std::uint32_t>(p0);
      const auto hi1 = static_cast<std::uint32_t>(p1 >> 32);
      const auto lo1 = static_cast<std::uint32_t>(p1);
      ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
    }
    return ctr;
  }

 private:
  static constexpr std::uint32_t kMul0 = 0xD2511F53u;
  static constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
  static constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
  static constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;
};

/// Two uniforms for (stream, step) under a 64-bit seed: u0 in (0, 1], u1 in [0, 1).
struct UniformPair {
  double u0;
  double u1;
};

inline UniformPair uniform_pair(std::uint64_t seed, std::uint64_t stream, std::uint64_t step) noexcept {
  const Philox4x32::Key key{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)};
  const Philox4x32::Counter ctr{static_cast<std::uint32_t>(stream),
                                static_cast<std::uint32_t>(stream >> 32),
                                static_cast<std::uint32_t>(step),
                                static_cast<std::uint32_t>(step >> 32)};
  const auto out = Philox4x32::apply(ctr, key);
  constexpr double kScale = 0x1.0p-53;
  const std::uint64_t b0 = (std::uint64_t{out[0]} << 32 | out[1]) >> 11;
  const std::uint64_t b1 = (std::uint64_t{out[2]} << 32 | out[3]) >> 11;
  return {(static_cast<double>(b0) + 1.0) * kScale, static_cast<double>(b1) * kScale};
}

/// Box-Muller angle for u1, centered on zero.
inline double box_muller_angle(double u1) noexcept { return 2.0 * std::numbers::pi * (u1 - 0.5); }

struct NormalPair {
  double first;
  double second;
};

/// Two independent standard normals for (stream, step). The path simulator
/// evaluates the same transform in vectorized form, so its draws agree with
/// this reference up to rounding.
inline NormalPair normal_pair(std::uint64_t seed, std::uint64_t stream, std::uint64_t step) noexcept {
  const UniformPair u = uniform_pair(seed, stream, step);
  const double radius = std::sqrt(-2.0 * std::log(u.u0));
  const double angle = box_muller_angle(u.u1);
  return {radius * std::cos(angle), radius * std::sin(angle)};
}

}  // namespace logkw
