#include "ppgfp/keyvalue.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>

#include "ppgfp/error.hpp"

namespace ppgfp {

namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

[[noreturn]] void bad_value(std::string_view key, const std::string& value, const char* want) {
  fail(ErrorKind::Config, std::string(key) + ": expected " + want + ", got '" + value + "'");
}

}  // namespace

const std::string* KeyValues::find(std::string_view key) const {
  for (const auto& [k, v] : entries)
    if (k == key) return &v;
  return nullptr;
}

void KeyValues::set(std::string key, std::string value) {
  for (auto& [k, v] : entries)
    if (k == key) {
      v = std::move(value);
      return;
    }
  entries.emplace_back(std::move(key), std::move(value));
}

KeyValues parse_key_values(std::string_view text, std::string_view source) {
  KeyValues kv;
  std::size_t line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    auto line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    const auto where = std::string(source) + ":" + std::to_string(line_no);
    if (eq == std::string_view::npos) fail(ErrorKind::Config, where + ": expected key=value");
    const auto key = trim(line.substr(0, eq));
    const auto value = trim(line.substr(eq + 1));
    if (key.empty()) fail(ErrorKind::Config, where + ": empty key");
    if (kv.find(key)) fail(ErrorKind::Config, where + ": duplicate key '" + std::string(key) + "'");
    kv.entries.emplace_back(std::string(key), std::string(value));
  }
  return kv;
}

std::string format_key_values(const KeyValues& kv) {
  std::string out;
  for (const auto& [k, v] : kv.entries) out += k + "=" + v + "\n";
  return out;
}

double parse_real(const std::string& value, std::string_view key) {
  double v = 0.0;
  const auto* end = value.data() + value.size();
  const auto [p, ec] = std::from_chars(value.data(), end, v);
  if (ec != std::errc() || p != end || !std::isfinite(v)) bad_value(key, value, "a finite number");
  return v;
}

std::size_t parse_count(const std::string& value, std::string_view key) {
  std::size_t v = 0;
  const auto* end = value.data() + value.size();
  const auto [p, ec] = std::from_chars(value.data(), end, v);
  if (ec != std::errc() || p != end) bad_value(key, value, "a non-negative integer");
  return v;
}

std::uint64_t parse_u64(const std::string& value, std::string_view key) {
  std::uint64_t v = 0;
  const auto* end = value.data() + value.size();
  const auto [p, ec] = std::from_chars(value.data(), end, v);
  if (ec != std::errc() || p != end) bad_value(key, value, "an unsigned 64-bit integer");
  return v;
}

bool parse_flag(const std::string& value, std::string_view key) {
  if (value == "1" || value == "true" || value == "on") return true;
  if (value == "0" || value == "false" || value == "off") return false;
  bad_value(key, value, "true/false");
}

std::string format_real(double v) {
  // Shortest text that parses back to the same double.
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

}  // namespace ppgfp
