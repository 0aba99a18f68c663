#pragma once

// Minimal RFC 4180 reader/writer helpers shared by the ingest and panel
// persistence code.

#include <istream>
#include <string>
#include <string_view>
#include <vector>

#include "factorlab/error.hpp"

namespace factorlab::csv {

inline std::string quote(std::string_view field) {
  if (field.find_first_of(",\"\n\r") == std::string_view::npos) return std::string(field);
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

class Reader {
 public:
  Reader(std::istream& in, std::string source) : in_(in), source_(std::move(source)) {
    if (!next(header_)) throw IoError(source_ + ": empty file");
  }

  const std::vector<std::string>& header() const { return header_; }
  std::size_t line() const { return line_; }
  std::string where() const { return source_ + ":" + std::to_string(line_); }

  /// Reads the next non-empty record. Returns false at end of input.
  bool next(std::vector<std::string>& fields) {
    std::string text;
    while (std::getline(in_, text)) {
      ++line_;
      if (!text.empty() && text.back() == '\r') text.pop_back();
      if (text.empty()) continue;
      split(text, fields);
      return true;
    }
    return false;
  }

 private:
  void split(const std::string& text, std::vector<std::string>& fields) {
    fields.clear();
    std::string cur;
    bool quoted = false;
    for (std::size_t k = 0; k < text.size(); ++k) {
      const char c = text[k];
      if (quoted) {
        if (c == '"' && k + 1 < text.size() && text[k + 1] == '"') {
          cur += '"';
          ++k;
        } else if (c == '"') {
          quoted = false;
        } else {
          cur += c;
        }
      } else if (c == '"') {
        quoted = true;
      } else if (c == ',') {
        fields.push_back(std::move(cur));
        cur.clear();
      } else {
        cur += c;
      }
    }
    if (quoted) throw IoError(where() + ": unterminated quoted field");
    fields.push_back(std::move(cur));
  }

  std::istream& in_;
  std::string source_;
  std::vector<std::string> header_;
  std::size_t line_ = 0;
};

}  // namespace factorlab::csv
