// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace magpha {

/// Line-oriented `key = value` config files: one assignment per line,
/// `#` starts a comment, blank lines ignored. Errors name the offending key
/// and line number.
class KeyValueConfig {
 public:
  static KeyValueConfig parse_file(const std::string& path);
  static KeyValueConfig parse_string(const std::string& text, const std::string& context);

  bool has(const std::string& key) const { return entries_.count(key) > 0; }

  std::string get_string(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  int64_t get_int(const std::string& key, int64_t fallback) const;
  uint64_t get_u64(const std::string& key, uint64_t fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  /// Comma-separated list of doubles.
  std::vector<double> get_double_list(const std::string& key,
                                      const std::vector<double>& fallback) const;

  /// Rejects keys outside `known` with an error naming the key and line.
  void check_known(const std::vector<std::string>& known) const;

  const std::string& context() const { return context_; }

 private:
  struct Entry {
    std::string value;
    int line = 0;
  };
  std::map<std::string, Entry> entries_;
  std::string context_;

  const Entry* find(const std::string& key) const;
  [[noreturn]] void fail(const std::string& key, int line, const std::string& what) const;
};

}  // namespace magpha
