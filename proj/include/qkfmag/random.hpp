#pragma once

// Counter-based random streams. A (master_seed, stream_index) pair names an
// independent stream; draw n of that stream is a pure function of the triple,
// so trajectories can run on any worker in any order.

#include <array>
#include <cstdint>

#include "qkfmag/core.hpp"

namespace qkfmag {

/// Philox4x32-10 (Salmon et al., SC'11).
std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> counter,
                                        std::array<std::uint32_t, 2> key) noexcept;

class GaussianStream {
public:
  explicit GaussianStream(SeedSpec seed) noexcept;

  /// Standard normal variate.
  double next() noexcept {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    return refill();
  }

  /// Uniform pair on (0,1) from one counter block; advances the stream.
  std::array<double, 2> uniform_pair() noexcept;

  std::uint64_t blocks_consumed() const noexcept { return block_; }

private:
  double refill() noexcept;

  std::array<std::uint32_t, 2> key_;
  std::uint32_t stream_lo_;
  std::uint32_t stream_hi_;
  std::uint64_t block_ = 0;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

}  // namespace qkfmag
