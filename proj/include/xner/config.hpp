#ifndef XNER_CONFIG_HPP_
#define XNER_CONFIG_HPP_

// Line-oriented run configuration:
//
//   # comment
//   seed = 7
//   [target]
//   train = data/es.train
//
// Keys inside a section are flattened to "section.key". Later assignments
// replace earlier ones, which is how command-line overrides are applied.

#include <charconv>
#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "xner/error.hpp"

namespace xner {

class Config {
 public:
  static Config parse(std::string_view text, const std::string& origin = "config") {
    Config c;
    std::string section;
    std::size_t line_no = 0, pos = 0;
    while (pos < text.size()) {
      std::size_t nl = text.find('\n', pos);
      if (nl == std::string_view::npos) nl = text.size();
      std::string line(text.substr(pos, nl - pos));
      pos = nl + 1;
      ++line_no;
      if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
      line = trim(line);
      if (line.empty()) continue;
      const std::string where = origin + ":" + std::to_string(line_no);
      if (line.front() == '[') {
        if (line.back() != ']') throw ConfigError(where + ": unterminated section header");
        section = trim(line.substr(1, line.size() - 2));
        if (section.empty()) throw ConfigError(where + ": empty section name");
        continue;
      }
      const auto eq = line.find('=');
      if (eq == std::string::npos) throw ConfigError(where + ": expected key = value");
      const std::string key = trim(line.substr(0, eq));
      if (key.empty()) throw ConfigError(where + ": empty key");
      c.values_[section.empty() ? key : section + "." + key] = trim(line.substr(eq + 1));
    }
    return c;
  }

  /// Applies "key=value" (key already flattened, e.g. "model.lstm_size").
  void set(std::string_view assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string_view::npos || eq == 0)
      throw ConfigError("override '" + std::string(assignment) + "' is not key=value");
    values_[trim(std::string(assignment.substr(0, eq)))] = trim(std::string(assignment.substr(eq + 1)));
  }
  void set(const std::string& key, const std::string& value) { values_[key] = value; }

  bool has(const std::string& key) const { return values_.count(key) > 0; }

  std::string str(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError("missing required setting '" + key + "'");
    return it->second;
  }
  std::string str(const std::string& key, const std::string& fallback) const { return has(key) ? str(key) : fallback; }

  std::uint64_t uint(const std::string& key) const { return parse_uint(key, str(key)); }
  std::uint64_t uint(const std::string& key, std::uint64_t fallback) const { return has(key) ? uint(key) : fallback; }

  double real(const std::string& key) const { return parse_real(key, str(key)); }
  double real(const std::string& key, double fallback) const { return has(key) ? real(key) : fallback; }

  bool flag(const std::string& key, bool fallback) const {
    if (!has(key)) return fallback;
    const std::string v = str(key);
    if (v == "true" || v == "yes" || v == "1" || v == "on") return true;
    if (v == "false" || v == "no" || v == "0" || v == "off") return false;
    throw ConfigError("setting '" + key + "' must be true or false, got '" + v + "'");
  }

  std::vector<std::uint64_t> uint_list(const std::string& key) const {
    std::vector<std::uint64_t> out;
    for (const auto& item : items(key)) out.push_back(parse_uint(key, item));
    return out;
  }
  std::vector<double> real_list(const std::string& key) const {
    std::vector<double> out;
    for (const auto& item : items(key)) out.push_back(parse_real(key, item));
    return out;
  }

  /// Rejects keys outside `allowed`; catches typos before any work starts.
  void check_known(const std::set<std::string>& allowed) const {
    for (const auto& [k, v] : values_)
      if (!allowed.count(k)) throw ConfigError("unknown setting '" + k + "'");
  }

  const std::map<std::string, std::string>& values() const noexcept { return values_; }

 private:
  static std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
  }

  std::vector<std::string> items(const std::string& key) const {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : str(key) + ",") {
      if (ch == ',') {
        cur = trim(cur);
        if (!cur.empty()) out.push_back(cur);
        cur.clear();
      } else {
        cur += ch;
      }
    }
    if (out.empty()) throw ConfigError("setting '" + key + "' is an empty list");
    return out;
  }

  static std::uint64_t parse_uint(const std::string& key, const std::string& v) {
    std::uint64_t out = 0;
    auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || p != v.data() + v.size())
      throw ConfigError("setting '" + key + "' must be a non-negative integer, got '" + v + "'");
    return out;
  }

  static double parse_real(const std::string& key, const std::string& v) {
    double out = 0;
    auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || p != v.data() + v.size())
      throw ConfigError("setting '" + key + "' must be a number, got '" + v + "'");
    return out;
  }

  std::map<std::string, std::string> values_;
};

}  // namespace xner

#endif  // XNER_CONFIG_HPP_
