// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <bit>
#include <cstdint>
#include <string>
#include <vector>

#include "magpha/errors.hpp"

namespace magpha {

/// Little-endian byte buffer writer.
class ByteWriter {
 public:
  void put_bytes(const void* p, size_t n);
  void put_u32(uint32_t v);
  void put_u64(uint64_t v);
  void put_i64(int64_t v) { put_u64(static_cast<uint64_t>(v)); }
  void put_f64(double v) { put_u64(std::bit_cast<uint64_t>(v)); }
  void put_string(const std::string& s);  // u32 length + bytes

  const std::vector<uint8_t>& bytes() const { return buf_; }
  std::vector<uint8_t>& bytes() { return buf_; }
  size_t size() const { return buf_.size(); }

 private:
  std::vector<uint8_t> buf_;
};

/// Little-endian reader over a byte buffer; errors carry the byte offset.
class ByteReader {
 public:
  ByteReader(const uint8_t* data, size_t size, std::string context)
      : data_(data), size_(size), context_(std::move(context)) {}

  size_t offset() const { return pos_; }
  size_t remaining() const { return size_ - pos_; }
  void get_bytes(void* p, size_t n);
  uint32_t get_u32();
  uint64_t get_u64();
  int64_t get_i64() { return static_cast<int64_t>(get_u64()); }
  double get_f64() { return std::bit_cast<double>(get_u64()); }
  std::string get_string();

  [[noreturn]] void fail(const std::string& what) const;

 private:
  const uint8_t* data_;
  size_t size_;
  size_t pos_ = 0;
  std::string context_;
};

std::vector<uint8_t> read_file_bytes(const std::string& path);
void write_file_bytes(const std::string& path, const std::vector<uint8_t>& bytes);

}  // namespace magpha
