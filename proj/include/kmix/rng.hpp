#pragma once

// Counter-based random streams built on Philox4x64-10 (Salmon, Moraes, Dror,
// Shaw, "Parallel Random Numbers: As Easy as 1, 2, 3", SC 2011).
//
// A stream is keyed by (seed, stream_index); draws walk a 256-bit counter.
// Everything downstream of this header (uniforms, normals, bounded integers,
// shuffles) is implemented here rather than through <random> distributions,
// whose algorithms are implementation-defined and would break cross-platform
// reproducibility.

#include <array>
#include <cmath>
#include <cstdint>
#include <span>
#include <utility>

namespace kmix {

namespace detail {

inline std::pair<std::uint64_t, std::uint64_t> mulhilo64(std::uint64_t a, std::uint64_t b) {
  const unsigned __int128 p = static_cast<unsigned __int128>(a) * b;
  return {static_cast<std::uint64_t>(p >> 64), static_cast<std::uint64_t>(p)};
}

}  // namespace detail

using PhiloxBlock = std::array<std::uint64_t, 4>;
using PhiloxKey = std::array<std::uint64_t, 2>;

/// One Philox4x64 block with 10 rounds.
inline PhiloxBlock philox4x64_10(PhiloxBlock ctr, PhiloxKey key) {
  constexpr std::uint64_t kMul0 = 0xD2E7470EE14C6C93ULL;
  constexpr std::uint64_t kMul1 = 0xCA5A826395121157ULL;
  constexpr std::uint64_t kWeyl0 = 0x9E3779B97F4A7C15ULL;
  constexpr std::uint64_t kWeyl1 = 0xBB67AE8584CAA73BULL;
  for (int round = 0; round < 10; ++round) {
    if (round > 0) {
      key[0] += kWeyl0;
      key[1] += kWeyl1;
    }
    const auto [hi0, lo0] = detail::mulhilo64(kMul0, ctr[0]);
    const auto [hi1, lo1] = detail::mulhilo64(kMul1, ctr[2]);
    ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
  }
  return ctr;
}

class RngStream {
public:
  RngStream(std::uint64_t seed, std::uint64_t stream_index)
      : seed_(seed), stream_index_(stream_index) {}

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream_index() const { return stream_index_; }

  std::uint64_t next_u64() {
    if (lane_ == 4) {
      block_ = philox4x64_10({block_counter_, 0, 0, 0}, {seed_, stream_index_});
      ++block_counter_;
      lane_ = 0;
    }
    return block_[lane_++];
  }

  /// Uniform on [0, 1) with 53 bits of resolution.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  /// Uniform on (0, 1]; safe to take the log of.
  double uniform_pos() { return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53; }

  /// Uniform integer in [0, bound) using Lemire's multiply-and-reject method.
  std::uint64_t below(std::uint64_t bound) {
    if (bound <= 1) return 0;
    auto [hi, lo] = detail::mulhilo64(next_u64(), bound);
    if (lo < bound) {
      const std::uint64_t threshold = (0 - bound) % bound;
      while (lo < threshold) {
        std::tie(hi, lo) = detail::mulhilo64(next_u64(), bound);
      }
    }
    return hi;
  }

  /// Uniform integer in the closed range [lo, hi].
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
    if (hi <= lo) return lo;
    const auto span = static_cast<std::uint64_t>(hi - lo) + 1;
    return lo + static_cast<std::int64_t>(below(span));
  }

  /// Standard normal via the Marsaglia polar method (second variate discarded).
  double normal() {
    for (;;) {
      const double u = 2.0 * uniform() - 1.0;
      const double v = 2.0 * uniform() - 1.0;
      const double s = u * u + v * v;
      if (s > 0.0 && s < 1.0) return u * std::sqrt(-2.0 * std::log(s) / s);
    }
  }

  /// Independent child stream; used to nest derivations (seed -> item -> draw).
  RngStream substream(std::uint64_t index) const {
    const auto mixed = philox4x64_10({~0ULL, ~0ULL, 0, 0}, {seed_, stream_index_});
    return RngStream(mixed[0], index);
  }

  template <typename T> void shuffle(std::span<T> items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(below(i));
      std::swap(items[i - 1], items[j]);
    }
  }

private:
  std::uint64_t seed_;
  std::uint64_t stream_index_;
  std::uint64_t block_counter_ = 0;
  PhiloxBlock block_{};
  int lane_ = 4;
};

inline RngStream split_stream(std::uint64_t seed, std::uint64_t index) {
  return RngStream(seed, index);
}

}  // namespace kmix
