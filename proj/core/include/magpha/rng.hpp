// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <vector>

namespace magpha {

/// Mixes a base seed with a stream index into an independent stream seed.
uint64_t mix_seed(uint64_t seed, uint64_t stream);
uint64_t mix_seed(uint64_t seed, uint64_t stream_a, uint64_t stream_b);

/// Deterministic, platform-independent random generator (splitmix64 core).
///
/// std::random distributions are implementation-defined, so everything that
/// must reproduce bit-identically across toolchains is drawn through this
/// class instead.
class SeededRng {
 public:
  explicit SeededRng(uint64_t seed) : state_(seed) {}

  uint64_t next_u64();

  /// Uniform double in [0, 1), 53-bit resolution.
  double uniform();
  /// Uniform double in [lo, hi).
  double uniform(double lo, double hi);
  /// Standard normal via Box-Muller.
  double normal();
  /// Uniform integer in [0, n). n must be > 0.
  uint64_t uniform_int(uint64_t n);

  /// In-place Fisher-Yates shuffle.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      size_t j = static_cast<size_t>(uniform_int(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  uint64_t state_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace magpha
