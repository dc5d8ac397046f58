#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "riccati_lab/io/text.hpp"

namespace riccati_lab {

/// Malformed config text, unknown keys, or values that fail to parse.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Allowed keys per section.
using ConfigSchema = std::map<std::string, std::set<std::string>>;

/// Plain-text config: "[section]" headers and "key = value" lines.
/// '#' or ';' start a comment when they begin a line or follow whitespace.
class Config {
 public:
  using Table = std::map<std::string, std::map<std::string, std::string>>;

  static Config parse(std::string_view text, const std::string& origin = "config") {
    Config c;
    std::string section;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
      const std::size_t end = std::min(text.find('\n', pos), text.size());
      std::string line(text.substr(pos, end - pos));
      pos = end + 1;
      ++line_no;
      for (std::size_t i = 0; i < line.size(); ++i) {
        if ((line[i] == '#' || line[i] == ';') && (i == 0 || line[i - 1] == ' ' || line[i - 1] == '\t')) {
          line.resize(i);
          break;
        }
      }
      const std::string t = io::trim(line);
      const std::string where = origin + ":" + std::to_string(line_no);
      if (t.empty()) continue;
      if (t.front() == '[') {
        if (t.back() != ']') throw ConfigError(where + ": unterminated section header");
        section = io::trim(t.substr(1, t.size() - 2));
        if (section.empty()) throw ConfigError(where + ": empty section name");
        c.table_[section];
        continue;
      }
      const std::size_t eq = t.find('=');
      if (eq == std::string::npos) throw ConfigError(where + ": expected 'key = value'");
      if (section.empty()) throw ConfigError(where + ": key outside any [section]");
      const std::string key = io::trim(t.substr(0, eq));
      if (key.empty()) throw ConfigError(where + ": empty key");
      auto& sec = c.table_[section];
      if (sec.count(key)) throw ConfigError(where + ": duplicate key " + section + "." + key);
      sec[key] = io::trim(t.substr(eq + 1));
    }
    return c;
  }

  /// Applies "section.key=value"; overrides any earlier value.
  void set(std::string_view assignment) {
    const std::size_t eq = assignment.find('=');
    if (eq == std::string_view::npos) throw ConfigError("--set expects section.key=value, got '" + std::string(assignment) + "'");
    const std::string lhs = io::trim(assignment.substr(0, eq));
    const std::size_t dot = lhs.find('.');
    if (dot == std::string::npos || dot == 0 || dot + 1 == lhs.size())
      throw ConfigError("--set expects section.key=value, got '" + std::string(assignment) + "'");
    table_[lhs.substr(0, dot)][lhs.substr(dot + 1)] = io::trim(assignment.substr(eq + 1));
  }

  void validate(const ConfigSchema& schema) const {
    for (const auto& [section, keys] : table_) {
      const auto it = schema.find(section);
      if (it == schema.end()) throw ConfigError("unknown config section [" + section + "]");
      for (const auto& [key, value] : keys)
        if (!it->second.count(key)) throw ConfigError("unknown config key " + section + "." + key);
    }
  }

  bool has(const std::string& section, const std::string& key) const {
    const auto it = table_.find(section);
    return it != table_.end() && it->second.count(key);
  }

  std::optional<std::string> find(const std::string& section, const std::string& key) const {
    if (!has(section, key)) return std::nullopt;
    return table_.at(section).at(key);
  }

  std::string get_string(const std::string& section, const std::string& key, const std::string& fallback) const {
    return find(section, key).value_or(fallback);
  }

  std::string require_string(const std::string& section, const std::string& key) const {
    if (auto v = find(section, key)) return *v;
    throw ConfigError("missing config key " + section + "." + key);
  }

  double get_double(const std::string& section, const std::string& key, double fallback) const {
    const auto v = find(section, key);
    if (!v) return fallback;
    try {
      return io::parse_double(*v);
    } catch (const io::FormatError&) {
      throw ConfigError(section + "." + key + ": not a number: '" + *v + "'");
    }
  }

  long get_int(const std::string& section, const std::string& key, long fallback) const {
    const auto v = find(section, key);
    if (!v) return fallback;
    try {
      return io::parse_int(*v);
    } catch (const io::FormatError&) {
      throw ConfigError(section + "." + key + ": not an integer: '" + *v + "'");
    }
  }

  std::size_t get_count(const std::string& section, const std::string& key, std::size_t fallback) const {
    const long v = get_int(section, key, static_cast<long>(fallback));
    if (v < 0) throw ConfigError(section + "." + key + ": must be >= 0");
    return static_cast<std::size_t>(v);
  }

  std::uint64_t get_seed(const std::string& section, const std::string& key, std::uint64_t fallback) const {
    const auto v = find(section, key);
    if (!v) return fallback;
    try {
      std::size_t used = 0;
      const unsigned long long s = std::stoull(*v, &used, 10);
      if (used != v->size() || v->front() == '-') throw std::invalid_argument("sign");
      return s;
    } catch (const std::exception&) {
      throw ConfigError(section + "." + key + ": not an unsigned integer: '" + *v + "'");
    }
  }

  bool get_bool(const std::string& section, const std::string& key, bool fallback) const {
    const auto v = find(section, key);
    if (!v) return fallback;
    if (*v == "true" || *v == "yes" || *v == "1") return true;
    if (*v == "false" || *v == "no" || *v == "0") return false;
    throw ConfigError(section + "." + key + ": expected true or false, got '" + *v + "'");
  }

  /// Comma-separated list; an empty value gives an empty list.
  std::vector<std::string> get_list(const std::string& section, const std::string& key,
                                    const std::vector<std::string>& fallback) const {
    const auto v = find(section, key);
    if (!v) return fallback;
    std::vector<std::string> out;
    if (io::trim(*v).empty()) return out;
    for (const auto& part : io::split(*v, ',')) {
      const std::string item = io::trim(part);
      if (item.empty()) throw ConfigError(section + "." + key + ": empty list entry");
      out.push_back(item);
    }
    return out;
  }

  const Table& table() const { return table_; }

 private:
  Table table_;
};

}  // namespace riccati_lab
