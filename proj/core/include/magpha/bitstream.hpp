// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <vector>

#include "magpha/errors.hpp"

namespace magpha {

/// Bit buffer with big-endian packing: the first bit written lands in the
/// most significant bit of the first byte; the tail is zero-padded to a
/// byte boundary.
struct BitStream {
  std::vector<uint8_t> bytes;
  int64_t bit_count = 0;

  void push_bit(int bit);
  /// Appends `width` bits of `value`, most significant first.
  void push_bits(uint64_t value, int width);

  int get_bit(int64_t index) const;
  uint64_t get_bits(int64_t index, int width) const;
};

class BitStreamReader {
 public:
  explicit BitStreamReader(const BitStream& s) : stream_(s) {}
  int64_t remaining() const { return stream_.bit_count - pos_; }
  int read_bit();
  uint64_t read_bits(int width);

 private:
  const BitStream& stream_;
  int64_t pos_ = 0;
};

}  // namespace magpha
