#include "relpretext/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

#include "relpretext/error.hpp"

namespace relpretext {

namespace {

std::string trim(const std::string& s) {
  size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  size_t e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

// Strips a trailing comment that is not inside a quoted string.
std::string strip_comment(const std::string& line) {
  bool in_quotes = false;
  for (size_t i = 0; i < line.size(); ++i) {
    if (line[i] == '"') in_quotes = !in_quotes;
    if (line[i] == '#' && !in_quotes) return line.substr(0, i);
  }
  return line;
}

std::string unquote(const std::string& v) {
  if (v.size() >= 2 && v.front() == '"' && v.back() == '"') return v.substr(1, v.size() - 2);
  return v;
}

std::vector<std::string> split_list(const std::string& raw, const std::string& key) {
  std::string v = trim(raw);
  check(v.size() >= 2 && v.front() == '[' && v.back() == ']', "ConfigParse",
        "value of " + key + " is not a [list]");
  v = v.substr(1, v.size() - 2);
  std::vector<std::string> parts;
  std::string cur;
  bool in_quotes = false;
  for (char c : v) {
    if (c == '"') in_quotes = !in_quotes;
    if (c == ',' && !in_quotes) {
      parts.push_back(trim(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (!trim(cur).empty()) parts.push_back(trim(cur));
  return parts;
}

}  // namespace

Config Config::parse_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail("ConfigParse", "cannot open config file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_string(buf.str(), path);
}

Config Config::parse_string(const std::string& text, const std::string& origin) {
  Config cfg;
  std::istringstream in(text);
  std::string line, section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = trim(strip_comment(line));
    if (line.empty()) continue;
    if (line.front() == '[') {
      check(line.back() == ']', "ConfigParse",
            origin + ":" + std::to_string(lineno) + ": unterminated section header");
      section = trim(line.substr(1, line.size() - 2));
      check(!section.empty(), "ConfigParse",
            origin + ":" + std::to_string(lineno) + ": empty section name");
      continue;
    }
    size_t eq = line.find('=');
    check(eq != std::string::npos, "ConfigParse",
          origin + ":" + std::to_string(lineno) + ": expected key = value");
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    check(!key.empty(), "ConfigParse", origin + ":" + std::to_string(lineno) + ": empty key");
    std::string full = section.empty() ? key : section + "." + key;
    cfg.values_[full] = value;
  }
  return cfg;
}

std::string Config::get_string(const std::string& key, const std::string& fallback) const {
  auto it = values_.find(key);
  return it == values_.end() ? fallback : unquote(it->second);
}

int64_t Config::get_int(const std::string& key, int64_t fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  const std::string v = unquote(trim(it->second));
  int64_t out = 0;
  auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  check(res.ec == std::errc() && res.ptr == v.data() + v.size(), "ConfigParse",
        key + " is not an integer: " + v);
  return out;
}

double Config::get_double(const std::string& key, double fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  const std::string v = unquote(trim(it->second));
  double out = 0;
  auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  check(res.ec == std::errc() && res.ptr == v.data() + v.size(), "ConfigParse",
        key + " is not a number: " + v);
  return out;
}

bool Config::get_bool(const std::string& key, bool fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  const std::string v = unquote(trim(it->second));
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  fail("ConfigParse", key + " is not a boolean: " + v);
}

std::vector<std::string> Config::get_string_list(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) return {};
  std::vector<std::string> out;
  for (const auto& part : split_list(it->second, key)) out.push_back(unquote(part));
  return out;
}

std::vector<int64_t> Config::get_int_list(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) return {};
  std::vector<int64_t> out;
  for (const auto& part : split_list(it->second, key)) {
    int64_t v = 0;
    auto res = std::from_chars(part.data(), part.data() + part.size(), v);
    check(res.ec == std::errc() && res.ptr == part.data() + part.size(), "ConfigParse",
          key + " has a non-integer element: " + part);
    out.push_back(v);
  }
  return out;
}

}  // namespace relpretext
