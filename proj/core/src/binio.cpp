// SPDX-License-Identifier: Apache-2.0
#include "magpha/binio.hpp"

#include <cstring>
#include <fstream>

namespace magpha {

void ByteWriter::put_bytes(const void* p, size_t n) {
  const auto* b = static_cast<const uint8_t*>(p);
  buf_.insert(buf_.end(), b, b + n);
}

void ByteWriter::put_u32(uint32_t v) {
  for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<uint8_t>(v >> (8 * i)));
}

void ByteWriter::put_u64(uint64_t v) {
  for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<uint8_t>(v >> (8 * i)));
}

void ByteWriter::put_string(const std::string& s) {
  put_u32(static_cast<uint32_t>(s.size()));
  put_bytes(s.data(), s.size());
}

void ByteReader::get_bytes(void* p, size_t n) {
  if (pos_ + n > size_) {
    fail("unexpected end of data reading " + std::to_string(n) + " bytes");
  }
  std::memcpy(p, data_ + pos_, n);
  pos_ += n;
}

uint32_t ByteReader::get_u32() {
  uint8_t b[4];
  get_bytes(b, 4);
  uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(b[i]) << (8 * i);
  return v;
}

uint64_t ByteReader::get_u64() {
  uint8_t b[8];
  get_bytes(b, 8);
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(b[i]) << (8 * i);
  return v;
}

std::string ByteReader::get_string() {
  const uint32_t n = get_u32();
  if (pos_ + n > size_) fail("unexpected end of data reading string of " + std::to_string(n));
  std::string s(reinterpret_cast<const char*>(data_ + pos_), n);
  pos_ += n;
  return s;
}

void ByteReader::fail(const std::string& what) const {
  throw FormatError(context_ + ": " + what + " (byte offset " + std::to_string(pos_) + ")");
}

std::vector<uint8_t> read_file_bytes(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw FormatError(path + ": cannot open for reading");
  f.seekg(0, std::ios::end);
  const std::streamoff n = f.tellg();
  f.seekg(0, std::ios::beg);
  std::vector<uint8_t> bytes(static_cast<size_t>(n));
  if (n > 0) f.read(reinterpret_cast<char*>(bytes.data()), n);
  if (!f) throw FormatError(path + ": read failed");
  return bytes;
}

void write_file_bytes(const std::string& path, const std::vector<uint8_t>& bytes) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw FormatError(path + ": cannot open for writing");
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw FormatError(path + ": write failed");
}

}  // namespace magpha
