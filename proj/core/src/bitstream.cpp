// SPDX-License-Identifier: Apache-2.0
#include "magpha/bitstream.hpp"

namespace magpha {

void BitStream::push_bit(int bit) {
  const int64_t byte = bit_count / 8;
  if (byte >= static_cast<int64_t>(bytes.size())) bytes.push_back(0);
  if (bit) bytes[static_cast<size_t>(byte)] |= static_cast<uint8_t>(0x80u >> (bit_count % 8));
  ++bit_count;
}

void BitStream::push_bits(uint64_t value, int width) {
  for (int i = width - 1; i >= 0; --i) push_bit(static_cast<int>((value >> i) & 1u));
}

int BitStream::get_bit(int64_t index) const {
  if (index < 0 || index >= bit_count) {
    throw FormatError("BitStream: bit index " + std::to_string(index) + " out of range");
  }
  return (bytes[static_cast<size_t>(index / 8)] >> (7 - index % 8)) & 1;
}

uint64_t BitStream::get_bits(int64_t index, int width) const {
  uint64_t v = 0;
  for (int i = 0; i < width; ++i) v = (v << 1) | static_cast<uint64_t>(get_bit(index + i));
  return v;
}

int BitStreamReader::read_bit() {
  if (pos_ >= stream_.bit_count) throw FormatError("BitStream: read past end");
  return stream_.get_bit(pos_++);
}

uint64_t BitStreamReader::read_bits(int width) {
  uint64_t v = 0;
  for (int i = 0; i < width; ++i) v = (v << 1) | static_cast<uint64_t>(read_bit());
  return v;
}

}  // namespace magpha
