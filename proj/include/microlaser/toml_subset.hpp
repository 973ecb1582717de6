#pragma once

#include <json.hpp>

#include <string_view>

namespace microlaser {

/// Reads the TOML used by experiment files into a JSON object.
///
/// Supported: comments, [table] and [a.b] headers, bare, quoted and dotted
/// keys, basic and literal strings, integers (with `_` separators), floats,
/// booleans and arrays (possibly spanning lines). Inline tables, array
/// tables and dates are rejected with a ConfigError naming the line.
nlohmann::json parse_toml(std::string_view text);

/// Parses a single TOML value such as `0.5`, `"velocity"` or `[1, 2]`.
nlohmann::json parse_toml_value(std::string_view text);

}  // namespace microlaser
