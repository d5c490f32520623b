#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace esi::config {

// Flat key-value configuration: one "key = value" per line, sections
// introduced by "[name]" headers (keys are addressed as "section.key"),
// lists comma-separated, '#' starts a comment.
class Config {
 public:
  static Config load(const std::string& path);
  static Config parse(const std::string& text, const std::string& origin = "<string>");

  bool has(const std::string& key) const { return values_.count(key) != 0; }

  std::string get_string(const std::string& key) const;
  std::string get_string(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key) const;
  double get_double(const std::string& key, double fallback) const;
  int get_int(const std::string& key) const;
  int get_int(const std::string& key, int fallback) const;
  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::vector<double> get_double_list(const std::string& key) const;
  std::vector<std::string> get_string_list(const std::string& key) const;

 private:
  std::map<std::string, std::string> values_;
  std::string origin_;
};

}  // namespace esi::config
