#pragma once

#include <array>
#include <cstdint>

namespace blo {

/// Philox4x32-10 block function (Salmon et al., SC'11). Pure: same key and counter give the
/// same output block.
std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> counter,
                                        std::array<std::uint32_t, 2> key) noexcept;

/// SplitMix64 finaliser; used to derive child seeds.
std::uint64_t mix64(std::uint64_t x) noexcept;

/// Child seed `index` of `parent`. Distinct (parent, index) pairs give well separated seeds.
std::uint64_t derive_seed(std::uint64_t parent, std::uint64_t index) noexcept;

/// Counter-based generator. A stream is identified by (seed, stream); the n-th draw is a
/// pure function of (seed, stream, n), so independent substreams need no shared state.
class CounterRng {
 public:
  explicit CounterRng(std::uint64_t seed, std::uint64_t stream = 0) noexcept;

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t stream() const noexcept { return stream_; }

  std::uint64_t next_u64() noexcept;
  /// Uniform on the open interval (0, 1).
  double uniform() noexcept;
  /// Standard normal via Box-Muller.
  double normal() noexcept;
  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) noexcept;

 private:
  void refill() noexcept;

  std::uint64_t seed_;
  std::uint64_t stream_;
  std::uint64_t block_ = 0;
  std::array<std::uint32_t, 4> buffer_{};
  int used_ = 4;  // 32-bit words consumed from buffer_
  bool has_spare_normal_ = false;
  double spare_normal_ = 0.0;
};

}  // namespace blo
