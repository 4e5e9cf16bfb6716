// Flat "key=value" text files: one pair per line, '#' starts a comment line,
// whitespace around keys and values is trimmed. Insertion order is preserved
// on output so files are byte-stable.

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace opal {

class KvFile {
 public:
  static KvFile parse(const std::string& text, const std::string& origin = "<string>");
  static KvFile load(const std::filesystem::path& path);

  void set(const std::string& key, const std::string& value);
  void set(const std::string& key, double value);
  void set(const std::string& key, uint64_t value);
  void set(const std::string& key, int value) { set(key, static_cast<int64_t>(value)); }
  void set(const std::string& key, int64_t value);
  void set(const std::string& key, bool value) { set(key, std::string(value ? "true" : "false")); }

  bool contains(const std::string& key) const { return find(key) != nullptr; }
  std::optional<std::string> get(const std::string& key) const;

  /// Typed getters throw ConfigError naming the key on malformed values.
  double get_double(const std::string& key, std::optional<double> fallback = std::nullopt) const;
  uint64_t get_u64(const std::string& key, std::optional<uint64_t> fallback = std::nullopt) const;
  int get_int(const std::string& key, std::optional<int> fallback = std::nullopt) const;
  bool get_bool(const std::string& key, std::optional<bool> fallback = std::nullopt) const;

  /// Keys present in the file but not in `known`.
  std::vector<std::string> unknown_keys(const std::vector<std::string>& known) const;

  const std::vector<std::pair<std::string, std::string>>& entries() const { return entries_; }
  std::string to_string() const;
  void save(const std::filesystem::path& path) const;

 private:
  const std::string* find(const std::string& key) const;
  std::vector<std::pair<std::string, std::string>> entries_;
};

/// Shortest round-trip decimal form of a double ("nan" for NaN).
std::string format_double(double v);

}  // namespace opal
