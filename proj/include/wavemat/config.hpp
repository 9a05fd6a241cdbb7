#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace wavemat {

/// Flat `key=value` configuration. Lines starting with `#` are comments.
/// Later entries (and merged overrides) replace earlier ones.
class KeyValueConfig {
 public:
  static KeyValueConfig parse(std::string_view text, std::string_view origin = "<config>");
  static KeyValueConfig load(const std::filesystem::path& path);

  void set(std::string key, std::string value) { entries_[std::move(key)] = std::move(value); }
  void merge(const KeyValueConfig& overrides);

  bool contains(const std::string& key) const { return entries_.contains(key); }
  std::optional<std::string> find(const std::string& key) const;

  // The typed getters throw DataError naming the key when it is missing or malformed.
  const std::string& get_string(const std::string& key) const;
  double get_double(const std::string& key) const;
  std::int64_t get_int(const std::string& key) const;
  std::uint64_t get_u64(const std::string& key) const;
  bool get_bool(const std::string& key) const;
  std::vector<std::string> get_list(const std::string& key) const;
  std::vector<int> get_int_list(const std::string& key) const;

  double get_double_or(const std::string& key, double fallback) const;

  /// Canonical sorted `key=value` text; stable input for hashing.
  std::string render() const;
  /// 16 hex digits derived from render().
  std::string hash_hex() const;

  const std::map<std::string, std::string>& entries() const noexcept { return entries_; }

 private:
  std::map<std::string, std::string> entries_;
};

/// The checked-in default configuration, embedded at build time.
const KeyValueConfig& builtin_config();

}  // namespace wavemat
