#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>

namespace phylosde {

// splitmix64 finalizer, used to spread seeds and small ids into key words
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Philox 4x64 with 10 rounds, a counter-based generator. A stream is the
// 128-bit key plus the upper two counter words; the lower two words count
// blocks. Distinct (key, stream) pairs give independent streams, so each
// branch or replicate can draw from its own stream regardless of the order
// the tree is walked in.
class Philox {
public:
  using Block = std::array<std::uint64_t, 4>;

  Philox(std::uint64_t key0, std::uint64_t key1, std::uint64_t stream_lo = 0,
         std::uint64_t stream_hi = 0) noexcept
      : key0_(key0), key1_(key1), ctr_{0, 0, stream_lo, stream_hi} {}

  static Block block(Block x, std::uint64_t k0, std::uint64_t k1) noexcept {
    for (int round = 0; round < 10; ++round) {
      const std::uint64_t hi0 = mulhi(kMul0, x[0]);
      const std::uint64_t lo0 = kMul0 * x[0];
      const std::uint64_t hi1 = mulhi(kMul1, x[2]);
      const std::uint64_t lo1 = kMul1 * x[2];
      x = {hi1 ^ x[1] ^ k0, lo1, hi0 ^ x[3] ^ k1, lo0};
      k0 += kWeyl0;
      k1 += kWeyl1;
    }
    return x;
  }

  std::uint64_t next_u64() noexcept {
    if (index_ == 4) {
      buffer_ = block(ctr_, key0_, key1_);
      if (++ctr_[0] == 0) ++ctr_[1];
      index_ = 0;
    }
    return buffer_[index_++];
  }

  // uniform on (0, 1]; never returns 0 so log() stays finite
  double next_uniform() noexcept {
    return static_cast<double>((next_u64() >> 11) + 1) * 0x1p-53;
  }

  // standard normal via Box-Muller; the paired draw is cached
  double next_normal() noexcept {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    const double u1 = next_uniform();
    const double u2 = static_cast<double>(next_u64() >> 11) * 0x1p-53;
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    spare_ = radius * std::sin(angle);
    have_spare_ = true;
    return radius * std::cos(angle);
  }

private:
  static constexpr std::uint64_t kMul0 = 0xD2E7470EE14C6C93ULL;
  static constexpr std::uint64_t kMul1 = 0xCA5A826395121157ULL;
  static constexpr std::uint64_t kWeyl0 = 0x9E3779B97F4A7C15ULL;
  static constexpr std::uint64_t kWeyl1 = 0xBB67AE8584CAA73BULL;

  static std::uint64_t mulhi(std::uint64_t a, std::uint64_t b) noexcept {
    return static_cast<std::uint64_t>(
        (static_cast<unsigned __int128>(a) * b) >> 64);
  }

  std::uint64_t key0_, key1_;
  Block ctr_;
  Block buffer_{};
  int index_ = 4;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

}  // namespace phylosde
