#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace ppgfp {

/// Ordered key=value lines. '#' starts a comment; blank lines are skipped.
struct KeyValues {
  std::vector<std::pair<std::string, std::string>> entries;

  const std::string* find(std::string_view key) const;
  void set(std::string key, std::string value);
};

/// Malformed lines and repeated keys raise a config error naming `source` and the line.
KeyValues parse_key_values(std::string_view text, std::string_view source = "config");
std::string format_key_values(const KeyValues& kv);

double parse_real(const std::string& value, std::string_view key);
std::size_t parse_count(const std::string& value, std::string_view key);
std::uint64_t parse_u64(const std::string& value, std::string_view key);
bool parse_flag(const std::string& value, std::string_view key);

/// Round-trippable decimal text for a double.
std::string format_real(double v);

}  // namespace ppgfp
