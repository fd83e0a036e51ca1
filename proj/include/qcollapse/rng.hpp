#pragma once

#include <cstdint>
#include <random>

namespace qcollapse {

/// Seedable 64-bit stream with a draw counter. Doubles are formed from the top
/// 53 bits so sequences are identical across standard libraries.
class RandomStream {
 public:
  explicit RandomStream(std::uint64_t seed = 0) : engine_(seed), seed_(seed) {}

  /// Uniform in [0, 1).
  double uniform() {
    ++cursor_;
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  /// Uniform index in [0, n).
  std::size_t index(std::size_t n) {
    const auto k = static_cast<std::size_t>(uniform() * static_cast<double>(n));
    return k < n ? k : n - 1;
  }

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t cursor() const noexcept { return cursor_; }

 private:
  std::mt19937_64 engine_;
  std::uint64_t seed_;
  std::uint64_t cursor_ = 0;
};

}  // namespace qcollapse
