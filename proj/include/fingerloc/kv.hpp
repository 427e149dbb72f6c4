#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace fingerloc {

/// Plain-text key/value store.
///
/// Format: one `key = value` per line, `#` or `;` starts a comment line and
/// `[section]` prefixes following keys with `section.`. Keys keep their
/// insertion order when written back out.
class KeyValueFile {
public:
  static KeyValueFile parse(std::string_view text, std::string_view origin = "<string>");
  static KeyValueFile load(const std::filesystem::path& path);

  void save(const std::filesystem::path& path) const;
  std::string to_string() const;

  bool contains(std::string_view key) const;
  std::optional<std::string> get(std::string_view key) const;

  /// Throws DataError naming the key when absent or unparsable.
  std::string require(std::string_view key) const;
  double require_double(std::string_view key) const;
  long long require_int(std::string_view key) const;

  double get_double(std::string_view key, double fallback) const;
  long long get_int(std::string_view key, long long fallback) const;
  std::string get_string(std::string_view key, std::string_view fallback) const;

  void set(std::string key, std::string value);
  void set(std::string key, double value);
  void set(std::string key, long long value);
  void set(std::string key, int value) { set(std::move(key), static_cast<long long>(value)); }

  /// Keys starting with `prefix.`; returned without the prefix.
  std::vector<std::string> keys_under(std::string_view prefix) const;
  const std::vector<std::string>& keys() const { return order_; }

private:
  std::map<std::string, std::string, std::less<>> values_;
  std::vector<std::string> order_;
  std::string origin_;
};

/// Shortest round-trip decimal text for a double.
std::string format_double(double value);

/// Strict full-string parsers; nullopt when text is not entirely a number.
std::optional<double> parse_double(std::string_view text);
std::optional<long long> parse_int(std::string_view text);

std::string_view trim(std::string_view text);
std::vector<std::string_view> split_fields(std::string_view line, char delimiter);

} // namespace fingerloc
