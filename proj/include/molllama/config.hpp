#pragma once

#include <filesystem>
#include <istream>
#include <map>
#include <string>

namespace molllama {

// Flat key=value configuration. '#' starts a comment; blank lines are ignored.
class FlatConfig {
 public:
  static FlatConfig parse(std::istream& in);
  static FlatConfig load(const std::filesystem::path& path);

  void set(const std::string& key, const std::string& value) { values_[key] = value; }
  bool has(const std::string& key) const { return values_.count(key) > 0; }

  std::string get(const std::string& key, const std::string& fallback) const;
  int get_int(const std::string& key, int fallback) const;
  long long get_int64(const std::string& key, long long fallback) const;
  double get_double(const std::string& key, double fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;

  const std::map<std::string, std::string>& values() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace molllama
