#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>

namespace solarda {

/// Ordered `key = value` text, '#' starts a comment. Later keys override earlier ones.
class KeyValues {
 public:
  static KeyValues parse(std::istream& in, const std::string& source_name = "<stream>");
  static KeyValues load(const std::filesystem::path& path);

  void set(const std::string& key, std::string value) { values_[key] = std::move(value); }
  bool contains(const std::string& key) const { return values_.count(key) != 0; }
  std::optional<std::string> get(const std::string& key) const;
  std::string get_or(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  long long get_int(const std::string& key, long long fallback) const;

  /// Merge `other` on top of this (other wins).
  void merge(const KeyValues& other);

  const std::map<std::string, std::string>& items() const noexcept { return values_; }

  /// Canonical form: keys sorted, one `key=value` per line.
  std::string serialize() const;
  void save(const std::filesystem::path& path) const;

 private:
  std::map<std::string, std::string> values_;
  std::string source_ = "<memory>";
};

}  // namespace solarda
