#include "microlaser/toml_subset.hpp"

#include "microlaser/error.hpp"

#include <cctype>
#include <charconv>
#include <string>
#include <vector>

namespace microlaser {

namespace {

class Reader {
public:
  explicit Reader(std::string_view text) : text_(text) {}

  nlohmann::json document() {
    nlohmann::json root = nlohmann::json::object();
    nlohmann::json* table = &root;
    for (;;) {
      skip_blank_lines();
      if (at_end()) break;
      if (peek() == '[') {
        ++pos_;
        if (peek() == '[') fail("array tables are not supported");
        skip_spaces();
        std::vector<std::string> path = key_path();
        skip_spaces();
        expect(']');
        end_of_line();
        table = &root;
        for (const std::string& part : path) {
          nlohmann::json& next = (*table)[part];
          if (next.is_null()) next = nlohmann::json::object();
          if (!next.is_object()) fail("key '" + part + "' is not a table");
          table = &next;
        }
        continue;
      }
      std::vector<std::string> path = key_path();
      skip_spaces();
      expect('=');
      skip_spaces();
      nlohmann::json v = value();
      end_of_line();
      nlohmann::json* target = table;
      for (std::size_t i = 0; i + 1 < path.size(); ++i) {
        nlohmann::json& next = (*target)[path[i]];
        if (next.is_null()) next = nlohmann::json::object();
        if (!next.is_object()) fail("key '" + path[i] + "' is not a table");
        target = &next;
      }
      if (target->contains(path.back())) fail("duplicate key '" + path.back() + "'");
      (*target)[path.back()] = std::move(v);
    }
    return root;
  }

  nlohmann::json single_value() {
    skip_spaces();
    nlohmann::json v = value();
    skip_spaces();
    if (!at_end()) fail("trailing characters after value");
    return v;
  }

private:
  [[noreturn]] void fail(const std::string& what) const {
    int line = 1;
    for (std::size_t i = 0; i < pos_ && i < text_.size(); ++i) line += text_[i] == '\n';
    throw ConfigError("TOML line " + std::to_string(line) + ": " + what);
  }

  bool at_end() const { return pos_ >= text_.size(); }
  char peek() const { return at_end() ? '\0' : text_[pos_]; }

  void expect(char c) {
    if (peek() != c) fail(std::string("expected '") + c + "'");
    ++pos_;
  }

  void skip_spaces() {
    while (peek() == ' ' || peek() == '\t') ++pos_;
  }

  void skip_comment() {
    if (peek() == '#') {
      while (!at_end() && peek() != '\n') ++pos_;
    }
  }

  void skip_blank_lines() {
    for (;;) {
      skip_spaces();
      skip_comment();
      if (peek() == '\r') ++pos_;
      if (peek() != '\n') return;
      ++pos_;
    }
  }

  // Whitespace, comments and newlines inside arrays.
  void skip_array_space() {
    for (;;) {
      skip_spaces();
      skip_comment();
      if (peek() == '\r' || peek() == '\n') {
        ++pos_;
        continue;
      }
      return;
    }
  }

  void end_of_line() {
    skip_spaces();
    skip_comment();
    if (peek() == '\r') ++pos_;
    if (at_end()) return;
    if (peek() != '\n') fail("unexpected characters at end of line");
    ++pos_;
  }

  static bool bare_char(char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-';
  }

  std::vector<std::string> key_path() {
    std::vector<std::string> path;
    for (;;) {
      skip_spaces();
      if (peek() == '"') {
        path.push_back(basic_string());
      } else if (peek() == '\'') {
        path.push_back(literal_string());
      } else {
        const std::size_t start = pos_;
        while (bare_char(peek())) ++pos_;
        if (pos_ == start) fail("expected a key");
        path.emplace_back(text_.substr(start, pos_ - start));
      }
      skip_spaces();
      if (peek() != '.') return path;
      ++pos_;
    }
  }

  std::string basic_string() {
    expect('"');
    std::string out;
    for (;;) {
      if (at_end() || peek() == '\n') fail("unterminated string");
      const char c = text_[pos_++];
      if (c == '"') return out;
      if (c != '\\') {
        out.push_back(c);
        continue;
      }
      const char e = text_[pos_++];
      switch (e) {
        case 'n': out.push_back('\n'); break;
        case 't': out.push_back('\t'); break;
        case 'r': out.push_back('\r'); break;
        case '"': out.push_back('"'); break;
        case '\\': out.push_back('\\'); break;
        default: fail(std::string("unsupported escape \\") + e);
      }
    }
  }

  std::string literal_string() {
    expect('\'');
    const std::size_t start = pos_;
    while (!at_end() && peek() != '\'' && peek() != '\n') ++pos_;
    if (peek() != '\'') fail("unterminated string");
    std::string out(text_.substr(start, pos_ - start));
    ++pos_;
    return out;
  }

  nlohmann::json value() {
    const char c = peek();
    if (c == '"') return basic_string();
    if (c == '\'') return literal_string();
    if (c == '{') fail("inline tables are not supported");
    if (c == '[') {
      ++pos_;
      nlohmann::json arr = nlohmann::json::array();
      for (;;) {
        skip_array_space();
        if (peek() == ']') {
          ++pos_;
          return arr;
        }
        arr.push_back(value());
        skip_array_space();
        if (peek() == ',') {
          ++pos_;
        } else if (peek() != ']') {
          fail("expected ',' or ']' in array");
        }
      }
    }
    const std::size_t start = pos_;
    while (!at_end() && (bare_char(peek()) || peek() == '.' || peek() == '+')) ++pos_;
    std::string token(text_.substr(start, pos_ - start));
    if (token.empty()) fail("expected a value");
    if (token == "true") return true;
    if (token == "false") return false;
    if (token == "inf" || token == "+inf" || token == "-inf" || token == "nan") {
      fail("non-finite numbers are not accepted");
    }
    std::string digits;
    for (std::size_t i = 0; i < token.size(); ++i) {
      if (token[i] != '_') {
        digits.push_back(token[i]);
        continue;
      }
      const bool between = i > 0 && i + 1 < token.size() &&
                           std::isdigit(static_cast<unsigned char>(token[i - 1])) &&
                           std::isdigit(static_cast<unsigned char>(token[i + 1]));
      if (!between) fail("misplaced '_' in number '" + token + "'");
    }
    if (!digits.empty() && digits.front() == '+') digits.erase(0, 1);
    const char* first = digits.data();
    const char* last = digits.data() + digits.size();
    const bool is_float = digits.find_first_of(".eE") != std::string::npos;
    if (!is_float) {
      std::int64_t i = 0;
      const auto r = std::from_chars(first, last, i);
      if (r.ec == std::errc() && r.ptr == last) return i;
    } else {
      double d = 0.0;
      const auto r = std::from_chars(first, last, d);
      if (r.ec == std::errc() && r.ptr == last) return d;
    }
    fail("invalid value '" + token + "'");
  }

  std::string_view text_;
  std::size_t pos_ = 0;
};

}  // namespace

nlohmann::json parse_toml(std::string_view text) { return Reader(text).document(); }

nlohmann::json parse_toml_value(std::string_view text) { return Reader(text).single_value(); }

}  // namespace microlaser
