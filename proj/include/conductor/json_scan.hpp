#pragma once

// Locating JSON values embedded in free-form controller output.

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>

#include <json.hpp>

namespace conductor::json_scan {

// Returns the end offset (one past the closing bracket) of the balanced
// region starting at `begin`, honoring string literals and escapes.
inline std::optional<std::size_t> balanced_end(std::string_view text, std::size_t begin) {
  const char open = text[begin];
  const char close = open == '[' ? ']' : '}';
  int depth = 0;
  bool in_string = false;
  bool escaped = false;
  for (std::size_t i = begin; i < text.size(); ++i) {
    const char c = text[i];
    if (in_string) {
      if (escaped) {
        escaped = false;
      } else if (c == '\\') {
        escaped = true;
      } else if (c == '"') {
        in_string = false;
      }
      continue;
    }
    if (c == '"') {
      in_string = true;
    } else if (c == '[' || c == '{') {
      ++depth;
    } else if (c == ']' || c == '}') {
      --depth;
      if (depth == 0) {
        return c == close ? std::optional<std::size_t>(i + 1) : std::nullopt;
      }
    }
  }
  return std::nullopt;
}

// First balanced top-level region opening with `open` that also decodes as
// JSON. Candidates are tried left to right, so prose such as "[note]" ahead
// of the real payload is skipped.
inline std::optional<std::string_view> first_region(std::string_view text, char open) {
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (text[i] != open) continue;
    auto end = balanced_end(text, i);
    if (!end) continue;
    auto candidate = text.substr(i, *end - i);
    if (nlohmann::json::accept(candidate)) return candidate;
  }
  return std::nullopt;
}

inline std::optional<std::string_view> first_array(std::string_view text) {
  return first_region(text, '[');
}

// First decodable object for which `pred(object)` holds.
template <typename Pred>
std::optional<nlohmann::json> first_object_where(std::string_view text, Pred&& pred) {
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (text[i] != '{') continue;
    auto end = balanced_end(text, i);
    if (!end) continue;
    auto candidate = text.substr(i, *end - i);
    auto value = nlohmann::json::parse(candidate, nullptr, false);
    if (value.is_discarded() || !value.is_object()) continue;
    if (pred(value)) return value;
  }
  return std::nullopt;
}

}  // namespace conductor::json_scan
