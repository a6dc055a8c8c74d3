#pragma once

// Flat configuration text: one "key = value" per line, '#' starts a comment,
// blank lines are ignored. A repeated key keeps its last value.

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace matchlab::config {

class KeyValues {
 public:
  /// ConfigError naming the source and line for malformed lines.
  static KeyValues parse(std::istream& in, const std::string& source = "<config>");
  static KeyValues load(const std::string& path);

  void set(const std::string& key, const std::string& value);
  std::optional<std::string> get(const std::string& key) const;
  const std::map<std::string, std::string>& entries() const { return entries_; }

  /// The first key not in `allowed`, if any.
  std::optional<std::string> unknown_key(const std::vector<std::string>& allowed) const;

  /// Sorted key/value pairs as a JSON object.
  std::string echo_json() const;

 private:
  std::map<std::string, std::string> entries_;
};

/// Typed conversions; ConfigError naming the key on bad input.
std::uint64_t to_u64(const std::string& key, const std::string& value);
int to_int(const std::string& key, const std::string& value);
double to_real(const std::string& key, const std::string& value);
bool to_bool(const std::string& key, const std::string& value);
/// "64,128,256" (commas or spaces).
std::vector<std::size_t> to_size_list(const std::string& key, const std::string& value);

}  // namespace matchlab::config
