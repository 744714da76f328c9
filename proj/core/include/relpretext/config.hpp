#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace relpretext {

// TOML-style config: [section] headers, key = value lines, # comments.
// Values: "strings", integers, floats, booleans, [flat, arrays]. Keys are
// addressed as "section.key"; CLI flags override file values via set().
class Config {
 public:
  static Config parse_file(const std::string& path);
  static Config parse_string(const std::string& text, const std::string& origin = "<string>");

  bool has(const std::string& key) const { return values_.count(key) > 0; }
  std::string get_string(const std::string& key, const std::string& fallback = "") const;
  int64_t get_int(const std::string& key, int64_t fallback) const;
  double get_double(const std::string& key, double fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::vector<std::string> get_string_list(const std::string& key) const;
  std::vector<int64_t> get_int_list(const std::string& key) const;

  void set(const std::string& key, const std::string& raw_value) { values_[key] = raw_value; }
  const std::map<std::string, std::string>& raw() const { return values_; }

 private:
  std::map<std::string, std::string> values_;  // raw value text, quotes stripped for strings
};

}  // namespace relpretext
