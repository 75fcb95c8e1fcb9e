#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace sargan {

struct ConfigKey {
  std::string name;
  std::string default_value;
  std::string help;
};

/// Flat key=value configuration restricted to a fixed key schema. Values are
/// kept as text and converted on access; conversion failures and unknown
/// keys throw UsageError.
class RunConfig {
 public:
  explicit RunConfig(std::vector<ConfigKey> schema);

  const std::vector<ConfigKey>& schema() const { return schema_; }
  bool knows(std::string_view key) const;

  void set(const std::string& key, const std::string& value);
  const std::string& get(const std::string& key) const;

  std::string get_string(const std::string& key) const { return get(key); }
  std::int64_t get_int(const std::string& key) const;
  std::uint64_t get_uint(const std::string& key) const;
  double get_double(const std::string& key) const;
  bool get_bool(const std::string& key) const;

  /// Lines are `key = value`; blank lines and lines starting with '#' are
  /// ignored, as is anything after a '#' preceded by whitespace.
  void merge_text(std::string_view text, const std::string& origin);
  void merge_file(const std::filesystem::path& path);

  // One `key=value` line per schema key, in schema order.
  std::string to_text() const;
  void write(const std::filesystem::path& path) const;

 private:
  std::vector<ConfigKey> schema_;
  std::map<std::string, std::string, std::less<>> values_;
};

}  // namespace sargan
