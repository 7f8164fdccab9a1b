#pragma once

#include "morphaeus/common.hpp"

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace morphaeus {

/// Sectioned `key = value` configuration (INI syntax, `;` or `#` comments).
///
/// Every key must appear in the known schema; values are type-checked on load and
/// after each override. Errors are ConfigError and name the file, line and key.
class Config {
 public:
  enum class Type { string, integer, real, boolean, list, integer_list };

  static Config from_file(const std::filesystem::path& path);
  static Config from_string(const std::string& text, const std::string& origin = "<string>");

  /// `section.key=value`; applied after parsing and validated immediately.
  void apply_override(const std::string& assignment);
  void apply_overrides(const std::vector<std::string>& assignments);
  void set(const std::string& key, const std::string& value);

  bool has(const std::string& key) const;
  std::string get_string(const std::string& key, const std::string& fallback = "") const;
  long long get_int(const std::string& key, long long fallback = 0) const;
  double get_real(const std::string& key, double fallback = 0.0) const;
  bool get_bool(const std::string& key, bool fallback = false) const;
  std::vector<std::string> get_list(const std::string& key, const std::vector<std::string>& fallback = {}) const;
  std::vector<int> get_int_list(const std::string& key, const std::vector<int>& fallback = {}) const;

  /// Keys present in one section, e.g. the explicit training overrides.
  std::vector<std::string> keys_in(const std::string& section) const;

  /// Resolved configuration in INI form, sections and keys sorted.
  std::string dump() const;
  std::string hash() const;
  const std::string& origin() const { return origin_; }

  /// Directory of the source file; relative paths in the config resolve against it.
  std::filesystem::path base_dir() const { return base_dir_; }
  std::filesystem::path get_path(const std::string& key, const std::filesystem::path& fallback = {}) const;

  static const std::map<std::string, Type>& schema();

 private:
  void check(const std::string& key, const std::string& value, std::optional<int> line) const;
  std::string where(const std::string& key, std::optional<int> line) const;

  std::map<std::string, std::string> values_;
  std::map<std::string, int> lines_;
  std::string origin_;
  std::filesystem::path base_dir_;
};

}  // namespace morphaeus
