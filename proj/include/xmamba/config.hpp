// Copyright 2026 The xmamba Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Typed INI-style configuration with a fixed schema.
//
//   # comment
//   [model]
//   d_model = 16
//
// Keys are addressed as `section.key`. Every key must appear in the schema;
// unknown keys, malformed values and duplicate keys are usage errors that
// name the offending key.

#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "xmamba/tensor.hpp"

namespace xmamba {

enum class ValueType { kInt, kReal, kString, kBool };

struct KeySpec {
  std::string key;  // section.name
  ValueType type;
  std::string default_value;
  std::string help;
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline bool parse_int(const std::string& v, long long& out) {
  try {
    std::size_t used = 0;
    out = std::stoll(v, &used);
    return used == v.size();
  } catch (const std::exception&) {
    return false;
  }
}

inline bool parse_real(const std::string& v, double& out) {
  if (v == "inf" || v == "+inf") {
    out = std::numeric_limits<double>::infinity();
    return true;
  }
  try {
    std::size_t used = 0;
    out = std::stod(v, &used);
    return used == v.size();
  } catch (const std::exception&) {
    return false;
  }
}

}  // namespace detail

class Config {
 public:
  explicit Config(std::vector<KeySpec> schema) : schema_(std::move(schema)) {
    for (std::size_t i = 0; i < schema_.size(); ++i) {
      index_[schema_[i].key] = i;
      values_[schema_[i].key] = schema_[i].default_value;
    }
  }

  /// Parses INI text. Later files or overrides replace earlier values.
  void parse(std::istream& in, const std::string& name = "config") {
    std::string section, line;
    std::map<std::string, std::size_t> seen;
    for (std::size_t n = 1; std::getline(in, line); ++n) {
      const auto hash = line.find('#');
      if (hash != std::string::npos) line.erase(hash);
      line = detail::trim(line);
      if (line.empty()) continue;
      const std::string where = name + ":" + std::to_string(n);
      if (line.front() == '[') {
        require(line.back() == ']', where + ": unterminated section header", ErrorKind::kUsage);
        section = detail::trim(line.substr(1, line.size() - 2));
        continue;
      }
      const auto eq = line.find('=');
      require(eq != std::string::npos, where + ": expected key = value", ErrorKind::kUsage);
      const std::string key =
          (section.empty() ? "" : section + ".") + detail::trim(line.substr(0, eq));
      const auto [it, fresh] = seen.emplace(key, n);
      require(fresh,
              where + ": duplicate key '" + key + "' (first at line " +
                  std::to_string(it->second) + ")",
              ErrorKind::kUsage);
      set(key, detail::trim(line.substr(eq + 1)), where);
    }
  }

  void parse_file(const std::string& path) {
    std::ifstream in(path);
    require(bool(in), "cannot open config '" + path + "'", ErrorKind::kUsage);
    parse(in, path);
  }

  /// Applies a `section.key=value` override.
  void apply_override(const std::string& kv) {
    const auto eq = kv.find('=');
    require(eq != std::string::npos, "override '" + kv + "' is not key=value", ErrorKind::kUsage);
    set(detail::trim(kv.substr(0, eq)), detail::trim(kv.substr(eq + 1)), "--set");
  }

  void set(const std::string& key, const std::string& value, const std::string& where = "") {
    const auto it = index_.find(key);
    const std::string pre = where.empty() ? "" : where + ": ";
    require(it != index_.end(), pre + "unknown config key '" + key + "'", ErrorKind::kUsage);
    const KeySpec& spec = schema_[it->second];
    long long i = 0;
    double r = 0;
    switch (spec.type) {
      case ValueType::kInt:
        require(detail::parse_int(value, i),
                pre + "key '" + key + "' expects an integer, got '" + value + "'",
                ErrorKind::kUsage);
        break;
      case ValueType::kReal:
        require(detail::parse_real(value, r),
                pre + "key '" + key + "' expects a number, got '" + value + "'",
                ErrorKind::kUsage);
        break;
      case ValueType::kBool:
        require(value == "true" || value == "false",
                pre + "key '" + key + "' expects true|false, got '" + value + "'",
                ErrorKind::kUsage);
        break;
      case ValueType::kString: break;
    }
    values_[key] = value;
  }

  const std::string& str(const std::string& key) const {
    const auto it = values_.find(key);
    require(it != values_.end(), "unknown config key '" + key + "'", ErrorKind::kUsage);
    return it->second;
  }

  long long integer(const std::string& key) const {
    long long v = 0;
    detail::parse_int(str(key), v);
    return v;
  }

  /// Non-negative integer; negative values are rejected naming the key.
  std::size_t count(const std::string& key) const {
    const long long v = integer(key);
    require(v >= 0, "config key '" + key + "' must be >= 0", ErrorKind::kUsage);
    return static_cast<std::size_t>(v);
  }

  double real(const std::string& key) const {
    double v = 0;
    detail::parse_real(str(key), v);
    return v;
  }

  bool boolean(const std::string& key) const { return str(key) == "true"; }

  /// Comma-separated list; empty string gives an empty list.
  std::vector<std::string> list(const std::string& key) const {
    std::vector<std::string> out;
    std::stringstream ss(str(key));
    for (std::string item; std::getline(ss, item, ',');) {
      item = detail::trim(item);
      if (!item.empty()) out.push_back(item);
    }
    return out;
  }

  /// Resolved configuration in schema order, sectioned, parseable by parse().
  std::string to_ini() const {
    std::ostringstream o;
    std::string section = "\x01";
    for (const auto& s : schema_) {
      const auto dot = s.key.find('.');
      const std::string sec = s.key.substr(0, dot);
      if (sec != section) {
        if (section != "\x01") o << '\n';
        o << '[' << sec << "]\n";
        section = sec;
      }
      o << s.key.substr(dot + 1) << " = " << values_.at(s.key) << '\n';
    }
    return o.str();
  }

  const std::vector<KeySpec>& schema() const noexcept { return schema_; }

 private:
  std::vector<KeySpec> schema_;
  std::map<std::string, std::size_t> index_;
  std::map<std::string, std::string> values_;
};

}  // namespace xmamba
