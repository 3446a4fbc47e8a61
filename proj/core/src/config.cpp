// SPDX-License-Identifier: Apache-2.0
#include "magpha/config.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

namespace magpha {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

KeyValueConfig KeyValueConfig::parse_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::invalid_argument(path + ": cannot open config file");
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_string(ss.str(), path);
}

KeyValueConfig KeyValueConfig::parse_string(const std::string& text, const std::string& context) {
  KeyValueConfig cfg;
  cfg.context_ = context;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument(context + ":" + std::to_string(line_no) +
                                  ": expected 'key = value', got '" + line + "'");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) {
      throw std::invalid_argument(context + ":" + std::to_string(line_no) + ": empty key");
    }
    if (cfg.entries_.count(key)) {
      throw std::invalid_argument(context + ":" + std::to_string(line_no) + ": duplicate key '" +
                                  key + "' (first at line " +
                                  std::to_string(cfg.entries_[key].line) + ")");
    }
    cfg.entries_[key] = Entry{value, line_no};
  }
  return cfg;
}

const KeyValueConfig::Entry* KeyValueConfig::find(const std::string& key) const {
  auto it = entries_.find(key);
  return it == entries_.end() ? nullptr : &it->second;
}

void KeyValueConfig::fail(const std::string& key, int line, const std::string& what) const {
  throw std::invalid_argument(context_ + ":" + std::to_string(line) + ": key '" + key + "': " +
                              what);
}

std::string KeyValueConfig::get_string(const std::string& key, const std::string& fallback) const {
  const Entry* e = find(key);
  return e ? e->value : fallback;
}

double KeyValueConfig::get_double(const std::string& key, double fallback) const {
  const Entry* e = find(key);
  if (!e) return fallback;
  try {
    size_t pos = 0;
    const double v = std::stod(e->value, &pos);
    if (pos != e->value.size()) fail(key, e->line, "trailing characters in number");
    return v;
  } catch (const std::invalid_argument&) {
    fail(key, e->line, "expected a number, got '" + e->value + "'");
  } catch (const std::out_of_range&) {
    fail(key, e->line, "number out of range");
  }
}

int64_t KeyValueConfig::get_int(const std::string& key, int64_t fallback) const {
  const Entry* e = find(key);
  if (!e) return fallback;
  try {
    size_t pos = 0;
    const int64_t v = std::stoll(e->value, &pos);
    if (pos != e->value.size()) fail(key, e->line, "trailing characters in integer");
    return v;
  } catch (const std::invalid_argument&) {
    fail(key, e->line, "expected an integer, got '" + e->value + "'");
  } catch (const std::out_of_range&) {
    fail(key, e->line, "integer out of range");
  }
}

uint64_t KeyValueConfig::get_u64(const std::string& key, uint64_t fallback) const {
  const Entry* e = find(key);
  if (!e) return fallback;
  try {
    size_t pos = 0;
    const uint64_t v = std::stoull(e->value, &pos);
    if (pos != e->value.size()) fail(key, e->line, "trailing characters in integer");
    return v;
  } catch (const std::invalid_argument&) {
    fail(key, e->line, "expected an unsigned integer, got '" + e->value + "'");
  } catch (const std::out_of_range&) {
    fail(key, e->line, "integer out of range");
  }
}

bool KeyValueConfig::get_bool(const std::string& key, bool fallback) const {
  const Entry* e = find(key);
  if (!e) return fallback;
  if (e->value == "true" || e->value == "1" || e->value == "yes") return true;
  if (e->value == "false" || e->value == "0" || e->value == "no") return false;
  fail(key, e->line, "expected true/false, got '" + e->value + "'");
}

std::vector<double> KeyValueConfig::get_double_list(const std::string& key,
                                                    const std::vector<double>& fallback) const {
  const Entry* e = find(key);
  if (!e) return fallback;
  std::vector<double> out;
  std::istringstream ss(e->value);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) fail(key, e->line, "empty list element");
    try {
      size_t pos = 0;
      out.push_back(std::stod(item, &pos));
      if (pos != item.size()) fail(key, e->line, "trailing characters in '" + item + "'");
    } catch (const std::invalid_argument&) {
      fail(key, e->line, "expected a number, got '" + item + "'");
    } catch (const std::out_of_range&) {
      fail(key, e->line, "number out of range");
    }
  }
  if (out.empty()) fail(key, e->line, "empty list");
  return out;
}

void KeyValueConfig::check_known(const std::vector<std::string>& known) const {
  for (const auto& [key, entry] : entries_) {
    bool ok = false;
    for (const auto& k : known) {
      if (k == key) {
        ok = true;
        break;
      }
    }
    if (!ok) {
      throw std::invalid_argument(context_ + ":" + std::to_string(entry.line) +
                                  ": unknown key '" + key + "'");
    }
  }
}

}  // namespace magpha
