#pragma once

// Reader for the sectioned `key = value` model format:
//
//   # comment
//   [section]
//   key = 1.5
//   key = "an expression"
//   key = ["a", "b"]            (arrays nest; may span several lines)
//
// Only the subset of TOML needed by model and kinetic files is accepted.

#include <charconv>
#include <cctype>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include "eshape/error.hpp"

namespace eshape::file {

struct Value {
  std::variant<double, std::string, std::vector<Value>> data;

  bool is_number() const { return std::holds_alternative<double>(data); }
  bool is_string() const { return std::holds_alternative<std::string>(data); }
  bool is_array() const { return std::holds_alternative<std::vector<Value>>(data); }
  double number() const { return std::get<double>(data); }
  const std::string& string() const { return std::get<std::string>(data); }
  const std::vector<Value>& array() const { return std::get<std::vector<Value>>(data); }
};

struct Entry {
  std::string key;
  Value value;
  std::size_t line = 0;
};

struct Section {
  std::string name;
  std::vector<Entry> entries;

  const Entry* find(std::string_view key) const {
    for (const auto& e : entries)
      if (e.key == key) return &e;
    return nullptr;
  }
};

struct Document {
  std::vector<Section> sections;

  const Section* find(std::string_view name) const {
    for (const auto& s : sections)
      if (s.name == name) return &s;
    return nullptr;
  }
};

class FormatError : public Error {
 public:
  FormatError(const std::string& what, std::size_t line)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

// Drops a trailing comment, leaving '#' inside quoted strings alone.
inline std::string_view strip_comment(std::string_view s) {
  bool quoted = false;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '\\' && quoted) {
      ++i;
      continue;
    }
    if (s[i] == '"') quoted = !quoted;
    if (s[i] == '#' && !quoted) return s.substr(0, i);
  }
  return s;
}

inline int bracket_balance(std::string_view s) {
  int depth = 0;
  bool quoted = false;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '\\' && quoted) {
      ++i;
      continue;
    }
    if (s[i] == '"') quoted = !quoted;
    if (quoted) continue;
    if (s[i] == '[') ++depth;
    if (s[i] == ']') --depth;
  }
  return depth;
}

class ValueParser {
 public:
  ValueParser(std::string_view s, std::size_t line) : s_(s), line_(line) {}

  Value parse_all() {
    Value v = parse_value();
    skip_ws();
    if (pos_ != s_.size()) fail("trailing characters after value");
    return v;
  }

 private:
  [[noreturn]] void fail(const std::string& what) const { throw FormatError(what, line_); }

  void skip_ws() {
    while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
  }

  Value parse_value() {
    skip_ws();
    if (pos_ >= s_.size()) fail("missing value");
    if (s_[pos_] == '"') return Value{parse_string()};
    if (s_[pos_] == '[') return Value{parse_array()};
    return Value{parse_number()};
  }

  std::string parse_string() {
    ++pos_;
    std::string out;
    while (pos_ < s_.size() && s_[pos_] != '"') {
      if (s_[pos_] == '\\' && pos_ + 1 < s_.size()) ++pos_;
      out += s_[pos_++];
    }
    if (pos_ >= s_.size()) fail("unterminated string");
    ++pos_;
    return out;
  }

  std::vector<Value> parse_array() {
    ++pos_;
    std::vector<Value> items;
    for (;;) {
      skip_ws();
      if (pos_ < s_.size() && s_[pos_] == ']') {
        ++pos_;
        return items;
      }
      items.push_back(parse_value());
      skip_ws();
      if (pos_ < s_.size() && s_[pos_] == ',') {
        ++pos_;
        continue;
      }
      if (pos_ < s_.size() && s_[pos_] == ']') {
        ++pos_;
        return items;
      }
      fail("expected ',' or ']' in array");
    }
  }

  double parse_number() {
    std::size_t start = pos_;
    while (pos_ < s_.size() && s_[pos_] != ',' && s_[pos_] != ']' &&
           !std::isspace(static_cast<unsigned char>(s_[pos_])))
      ++pos_;
    std::string_view tok = s_.substr(start, pos_ - start);
    if (!tok.empty() && tok.front() == '+') tok.remove_prefix(1);
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (tok.empty() || ec != std::errc() || ptr != tok.data() + tok.size())
      fail("malformed number '" + std::string(s_.substr(start, pos_ - start)) + "'");
    return v;
  }

  std::string_view s_;
  std::size_t line_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline Document parse_document(std::string_view text) {
  Document doc;
  std::istringstream in{std::string(text)};
  std::string raw;
  std::size_t lineno = 0;
  while (std::getline(in, raw)) {
    ++lineno;
    if (!raw.empty() && raw.back() == '\r') raw.pop_back();
    std::string line(detail::trim(detail::strip_comment(raw)));
    if (line.empty()) continue;
    if (line.front() == '[' && line.find('=') == std::string::npos) {
      if (line.back() != ']') throw FormatError("malformed section header", lineno);
      doc.sections.push_back({std::string(detail::trim(std::string_view(line).substr(1, line.size() - 2))), {}});
      continue;
    }
    auto eq = line.find('=');
    if (eq == std::string::npos) throw FormatError("expected 'key = value'", lineno);
    if (doc.sections.empty()) throw FormatError("entry outside of any section", lineno);
    std::string key(detail::trim(std::string_view(line).substr(0, eq)));
    std::string value(detail::trim(std::string_view(line).substr(eq + 1)));
    const std::size_t first_line = lineno;
    while (detail::bracket_balance(value) > 0) {
      if (!std::getline(in, raw)) throw FormatError("unterminated array", first_line);
      ++lineno;
      if (!raw.empty() && raw.back() == '\r') raw.pop_back();
      value += ' ';
      value += detail::trim(detail::strip_comment(raw));
    }
    if (key.empty()) throw FormatError("empty key", first_line);
    auto& section = doc.sections.back();
    if (section.find(key)) throw FormatError("duplicate key '" + key + "'", first_line);
    section.entries.push_back({key, detail::ValueParser(value, first_line).parse_all(), first_line});
  }
  return doc;
}

inline std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace eshape::file
