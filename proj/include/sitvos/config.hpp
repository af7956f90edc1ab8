#pragma once

#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>

#include "sitvos/errors.hpp"

namespace sitvos {

// Flat dotted-key configuration: one `key = value` per line, '#' comments.
// Unknown keys are a startup error; command-line overrides win over the file.
class ConfigMap {
 public:
  ConfigMap() = default;

  static ConfigMap parse(std::istream& is, const std::string& origin = "<config>") {
    ConfigMap cfg;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
      ++lineno;
      const std::size_t hash = line.find('#');
      if (hash != std::string::npos) line.erase(hash);
      const std::string trimmed = trim(line);
      if (trimmed.empty()) continue;
      const std::size_t eq = trimmed.find('=');
      if (eq == std::string::npos)
        throw FormatError(origin + ":" + std::to_string(lineno) + ": expected `key = value`");
      const std::string key = trim(trimmed.substr(0, eq));
      const std::string value = trim(trimmed.substr(eq + 1));
      if (key.empty())
        throw FormatError(origin + ":" + std::to_string(lineno) + ": empty key");
      cfg.values_[key] = value;
    }
    return cfg;
  }

  static ConfigMap load(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open config file: " + path);
    return parse(is, path);
  }

  // Overrides (e.g. from flags) replace file values.
  void set(const std::string& key, const std::string& value) { values_[key] = value; }

  bool has(const std::string& key) const { return values_.count(key) != 0; }

  std::string get_string(const std::string& key, const std::string& fallback) const {
    auto it = values_.find(key);
    return it == values_.end() ? fallback : it->second;
  }

  double get_double(const std::string& key, double fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    try {
      std::size_t used = 0;
      const double v = std::stod(it->second, &used);
      if (used != it->second.size()) throw FormatError("");
      return v;
    } catch (...) {
      throw FormatError("config key '" + key + "': not a number: '" + it->second + "'");
    }
  }

  long long get_int(const std::string& key, long long fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    try {
      std::size_t used = 0;
      const long long v = std::stoll(it->second, &used);
      if (used != it->second.size()) throw FormatError("");
      return v;
    } catch (...) {
      throw FormatError("config key '" + key + "': not an integer: '" + it->second + "'");
    }
  }

  bool get_bool(const std::string& key, bool fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    if (it->second == "true" || it->second == "1") return true;
    if (it->second == "false" || it->second == "0") return false;
    throw FormatError("config key '" + key + "': not a boolean: '" + it->second + "'");
  }

  // Startup validation: every present key must be known.
  void require_known(const std::set<std::string>& known) const {
    std::string unknown;
    for (const auto& [key, value] : values_)
      if (known.count(key) == 0) unknown += (unknown.empty() ? "" : ", ") + key;
    if (!unknown.empty()) throw ContractError("unknown config keys: " + unknown);
  }

  const std::map<std::string, std::string>& entries() const { return values_; }

 private:
  static std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
  }

  std::map<std::string, std::string> values_;
};

}  // namespace sitvos
