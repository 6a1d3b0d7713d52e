#pragma once

#include <cctype>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace rfabc {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Flat key-value configuration with [section] headers (TOML-style syntax).
/// Values: booleans, numbers, quoted or bare strings, [a, b, c] arrays.
/// Keys are stored fully qualified as "section.key".
class Config {
 public:
  using Value =
      std::variant<bool, double, std::string, std::vector<double>,
                   std::vector<std::string>>;

  struct Entry {
    Value value;
    std::size_t line = 0;
  };

  static Config parse_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_string(buf.str(), path);
  }

  static Config parse_string(const std::string& text,
                             const std::string& origin = "<string>") {
    Config cfg;
    cfg.origin_ = origin;
    std::istringstream in(text);
    std::string line;
    std::string section;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      const std::string t = strip_comment(line);
      if (t.empty()) continue;
      if (t.front() == '[') {
        if (t.back() != ']')
          throw cfg.error(line_no, "unterminated section header");
        section = trim(t.substr(1, t.size() - 2));
        if (section.empty()) throw cfg.error(line_no, "empty section name");
        continue;
      }
      const auto eq = t.find('=');
      if (eq == std::string::npos)
        throw cfg.error(line_no, "expected key = value");
      const std::string key = trim(t.substr(0, eq));
      const std::string raw = trim(t.substr(eq + 1));
      if (key.empty()) throw cfg.error(line_no, "empty key");
      if (raw.empty()) throw cfg.error(line_no, "empty value for key '" + key + "'");
      const std::string full = section.empty() ? key : section + "." + key;
      if (cfg.entries_.count(full))
        throw cfg.error(line_no, "duplicate key '" + full + "'");
      cfg.entries_[full] = {cfg.parse_value(raw, line_no), line_no};
    }
    return cfg;
  }

  bool has(const std::string& key) const { return entries_.count(key) > 0; }

  bool get_bool(const std::string& key, std::optional<bool> fallback = {}) const {
    if (const Entry* e = find(key)) {
      if (const bool* b = std::get_if<bool>(&e->value)) return *b;
      throw type_error(key, *e, "boolean");
    }
    return require_fallback(key, fallback);
  }

  double get_number(const std::string& key,
                    std::optional<double> fallback = {}) const {
    if (const Entry* e = find(key)) {
      if (const double* d = std::get_if<double>(&e->value)) return *d;
      throw type_error(key, *e, "number");
    }
    return require_fallback(key, fallback);
  }

  long get_int(const std::string& key, std::optional<long> fallback = {}) const {
    if (has(key)) return static_cast<long>(get_number(key));
    return require_fallback(key, fallback);
  }

  std::string get_string(const std::string& key,
                         std::optional<std::string> fallback = {}) const {
    if (const Entry* e = find(key)) {
      if (const std::string* s = std::get_if<std::string>(&e->value)) return *s;
      throw type_error(key, *e, "string");
    }
    return require_fallback(key, fallback);
  }

  // A scalar number is accepted as a one-element list.
  std::vector<double> get_numbers(
      const std::string& key,
      std::optional<std::vector<double>> fallback = {}) const {
    if (const Entry* e = find(key)) {
      if (const auto* v = std::get_if<std::vector<double>>(&e->value)) return *v;
      if (const double* d = std::get_if<double>(&e->value)) return {*d};
      throw type_error(key, *e, "number list");
    }
    return require_fallback(key, fallback);
  }

  std::vector<std::string> keys_with_prefix(const std::string& prefix) const {
    std::vector<std::string> out;
    for (const auto& [k, v] : entries_)
      if (k.rfind(prefix, 0) == 0) out.push_back(k);
    return out;
  }

  const std::string& origin() const { return origin_; }

 private:
  std::map<std::string, Entry> entries_;
  std::string origin_;

  const Entry* find(const std::string& key) const {
    const auto it = entries_.find(key);
    return it == entries_.end() ? nullptr : &it->second;
  }

  template <typename T>
  T require_fallback(const std::string& key, const std::optional<T>& fb) const {
    if (fb) return *fb;
    throw ConfigError(origin_ + ": missing required key '" + key + "'");
  }

  ConfigError error(std::size_t line, const std::string& msg) const {
    return ConfigError(origin_ + ":" + std::to_string(line) + ": " + msg);
  }

  ConfigError type_error(const std::string& key, const Entry& e,
                         const char* want) const {
    return ConfigError(origin_ + ":" + std::to_string(e.line) + ": key '" +
                       key + "' is not a " + want);
  }

  static std::string trim(const std::string& s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return s.substr(b, e - b);
  }

  static std::string strip_comment(const std::string& line) {
    std::string out;
    bool quoted = false;
    for (char ch : line) {
      if (ch == '"') quoted = !quoted;
      if (ch == '#' && !quoted) break;
      out += ch;
    }
    return trim(out);
  }

  Value parse_value(const std::string& raw, std::size_t line_no) const {
    if (raw == "true") return true;
    if (raw == "false") return false;
    if (raw.front() == '"') {
      if (raw.size() < 2 || raw.back() != '"')
        throw error(line_no, "unterminated string");
      return raw.substr(1, raw.size() - 2);
    }
    if (raw.front() == '[') {
      if (raw.back() != ']') throw error(line_no, "unterminated array");
      const std::string body = trim(raw.substr(1, raw.size() - 2));
      std::vector<double> nums;
      std::vector<std::string> strs;
      bool string_array = false;
      if (!body.empty()) {
        std::size_t pos = 0;
        while (pos <= body.size()) {
          std::size_t comma = body.find(',', pos);
          if (comma == std::string::npos) comma = body.size();
          const std::string item = trim(body.substr(pos, comma - pos));
          if (item.empty()) throw error(line_no, "empty array element");
          if (item.front() == '"') {
            if (item.size() < 2 || item.back() != '"')
              throw error(line_no, "unterminated string in array");
            strs.push_back(item.substr(1, item.size() - 2));
            string_array = true;
          } else {
            nums.push_back(parse_number(item, line_no));
          }
          pos = comma + 1;
          if (comma == body.size()) break;
        }
      }
      if (string_array) {
        if (!nums.empty())
          throw error(line_no, "mixed string/number array");
        return strs;
      }
      return nums;
    }
    return parse_number(raw, line_no);
  }

  double parse_number(const std::string& raw, std::size_t line_no) const {
    try {
      std::size_t used = 0;
      const double v = std::stod(raw, &used);
      if (used != raw.size())
        throw error(line_no, "trailing characters after number '" + raw + "'");
      return v;
    } catch (const ConfigError&) {
      throw;
    } catch (const std::exception&) {
      throw error(line_no, "cannot parse value '" + raw + "'");
    }
  }
};

}  // namespace rfabc
