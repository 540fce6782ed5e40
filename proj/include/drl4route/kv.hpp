#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include "drl4route/errors.hpp"

// Flat key=value text: one pair per line, '#' starts a comment, blank lines
// ignored, surrounding whitespace trimmed.
namespace drl4route::kv {

using Map = std::map<std::string, std::string>;

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline Map parse(std::istream& in) {
  Map out;
  std::string line;
  long long lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw FormatError("expected key=value", lineno);
    std::string key = trim(line.substr(0, eq));
    if (key.empty()) throw FormatError("empty key", lineno);
    out[key] = trim(line.substr(eq + 1));
  }
  return out;
}

inline Map parse_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open '" + path + "'");
  return parse(f);
}

inline Map parse_string(const std::string& text) {
  std::istringstream in(text);
  return parse(in);
}

inline double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used == v.size()) return d;
  } catch (const std::exception&) {
  }
  throw InputError("config key '" + key + "': expected a number, got '" + v + "'");
}

inline std::uint64_t to_size(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    if (!v.empty() && v[0] != '-') {
      const auto n = std::stoull(v, &used);
      if (used == v.size()) return n;
    }
  } catch (const std::exception&) {
  }
  throw InputError("config key '" + key + "': expected a non-negative integer, got '" + v + "'");
}

inline bool to_bool(const std::string& key, const std::string& v) {
  if (v == "1" || v == "true") return true;
  if (v == "0" || v == "false") return false;
  throw InputError("config key '" + key + "': expected true/false, got '" + v + "'");
}

}  // namespace drl4route::kv
