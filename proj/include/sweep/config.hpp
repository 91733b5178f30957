#pragma once

#include "sweep/core.hpp"

#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

namespace sweep {

/// Flat key=value run configuration: optional file, then --set overrides.
/// Unknown keys are kept (instance parameter overrides use the instance.*
/// prefix); numeric getters validate ranges at access time.
struct RunConfig {
  std::map<std::string, std::string> kv;

  static RunConfig from_file(const std::filesystem::path& path) {
    RunConfig cfg;
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path.string());
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      const auto hash = line.find('#');
      if (hash != std::string::npos) line.erase(hash);
      auto trim = [](std::string s) {
        const auto a = s.find_first_not_of(" \t\r");
        const auto b = s.find_last_not_of(" \t\r");
        return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
      };
      line = trim(line);
      if (line.empty()) continue;
      const auto eq = line.find('=');
      if (eq == std::string::npos)
        throw ConfigError(path.string() + ":" + std::to_string(lineno) + ": expected key=value");
      cfg.kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
    }
    return cfg;
  }

  void set(const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + assignment + "'");
    kv[assignment.substr(0, eq)] = assignment.substr(eq + 1);
  }

  bool has(const std::string& key) const { return kv.count(key) > 0; }

  std::string get_string(const std::string& key, const std::string& dflt) const {
    auto it = kv.find(key);
    return it == kv.end() ? dflt : it->second;
  }

  double get_double(const std::string& key, double dflt) const {
    auto it = kv.find(key);
    if (it == kv.end()) return dflt;
    try {
      std::size_t pos = 0;
      const double v = std::stod(it->second, &pos);
      if (pos != it->second.size()) throw ConfigError(key + ": not a number: " + it->second);
      return v;
    } catch (const std::exception&) {
      throw ConfigError(key + ": not a number: " + it->second);
    }
  }

  int get_int(const std::string& key, int dflt) const {
    const double v = get_double(key, dflt);
    const int i = static_cast<int>(v);
    if (static_cast<double>(i) != v) throw ConfigError(key + ": not an integer");
    return i;
  }

  double get_positive(const std::string& key, double dflt) const {
    const double v = get_double(key, dflt);
    if (!(v > 0.0)) throw ConfigError(key + ": must be positive, got " + std::to_string(v));
    return v;
  }

  int get_positive_int(const std::string& key, int dflt) const {
    const int v = get_int(key, dflt);
    if (v <= 0) throw ConfigError(key + ": must be positive");
    return v;
  }

  std::uint64_t seed() const { return static_cast<std::uint64_t>(get_int("seed", 42)); }

  /// Keys with the given prefix, stripped, parsed as doubles.
  std::map<std::string, double> prefixed_doubles(const std::string& prefix) const {
    std::map<std::string, double> out;
    for (const auto& [k, v] : kv) {
      if (k.rfind(prefix, 0) == 0) out[k.substr(prefix.size())] = get_double(k, 0.0);
    }
    return out;
  }
};

}  // namespace sweep
