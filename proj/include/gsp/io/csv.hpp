#pragma once

// RFC-4180 CSV reading and writing, number formatting, atomic file writes.

#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <system_error>
#include <vector>

#include "gsp/market.hpp"

namespace gsp::io {

namespace fs = std::filesystem;

/// Input error carrying the file and line it refers to.
class ParseError : public InvalidInput {
 public:
  ParseError(const std::string& file, std::size_t line, const std::string& what)
      : InvalidInput(file + ":" + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

inline std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidInput("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Writes through a temporary file in the same directory and renames it over
/// the target, so readers never see a partial file.
inline void write_file_atomic(const fs::path& path, const std::string& content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw InvalidInput("cannot write '" + tmp.string() + "'");
    out << content;
    out.flush();
    if (!out) throw InvalidInput("write failed for '" + tmp.string() + "'");
  }
  fs::rename(tmp, path);
}

/// 12 significant digits.
inline std::string format_number(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.12g", x);
  return buf;
}

struct CsvRecord {
  std::size_t line = 0;  // line on which the record starts
  std::vector<std::string> fields;
};

inline std::vector<CsvRecord> parse_csv(const std::string& text, const std::string& name) {
  std::vector<CsvRecord> out;
  std::size_t i = 0, line = 1;
  const std::size_t n = text.size();
  if (n >= 3 && text.compare(0, 3, "\xEF\xBB\xBF") == 0) i = 3;
  while (i < n) {
    CsvRecord rec;
    rec.line = line;
    std::string field;
    bool done = false;
    while (!done) {
      field.clear();
      if (i < n && text[i] == '"') {
        const std::size_t open_line = line;
        ++i;
        while (true) {
          if (i >= n) throw ParseError(name, open_line, "unterminated quoted field");
          const char c = text[i++];
          if (c == '"') {
            if (i < n && text[i] == '"') {
              field += '"';
              ++i;
            } else {
              break;
            }
          } else {
            if (c == '\n') ++line;
            field += c;
          }
        }
        if (i < n && text[i] != ',' && text[i] != '\n' && text[i] != '\r')
          throw ParseError(name, line, "unexpected character after closing quote");
      } else {
        while (i < n && text[i] != ',' && text[i] != '\n' && text[i] != '\r') {
          if (text[i] == '"') throw ParseError(name, line, "quote inside unquoted field");
          field += text[i++];
        }
      }
      rec.fields.push_back(field);
      if (i < n && text[i] == ',') {
        ++i;
        continue;
      }
      if (i < n && text[i] == '\r') ++i;
      if (i < n && text[i] == '\n') ++i;
      ++line;
      done = true;
    }
    if (rec.fields.size() == 1 && rec.fields[0].empty()) continue;  // blank line
    out.push_back(std::move(rec));
  }
  return out;
}

/// A CSV file with a header row; columns are looked up by name.
class CsvTable {
 public:
  CsvTable(const std::string& text, std::string name) : name_(std::move(name)) {
    auto records = parse_csv(text, name_);
    if (records.empty()) throw ParseError(name_, 1, "missing header row");
    header_ = records.front().fields;
    for (std::size_t c = 0; c < header_.size(); ++c)
      if (!columns_.emplace(header_[c], c).second) throw ParseError(name_, 1, "duplicate column '" + header_[c] + "'");
    rows_.assign(records.begin() + 1, records.end());
    for (const auto& r : rows_)
      if (r.fields.size() != header_.size())
        throw ParseError(name_, r.line, "expected " + std::to_string(header_.size()) + " fields, found " +
                                            std::to_string(r.fields.size()));
  }

  static CsvTable load(const fs::path& path) { return CsvTable(read_file(path), path.string()); }

  const std::string& name() const { return name_; }
  std::size_t size() const { return rows_.size(); }
  bool has(const std::string& col) const { return columns_.count(col) > 0; }

  void require(std::initializer_list<const char*> cols) const {
    for (const char* c : cols)
      if (!has(c)) throw ParseError(name_, 1, std::string("missing column '") + c + "'");
  }

  std::size_t line(std::size_t row) const { return rows_.at(row).line; }

  const std::string& text(std::size_t row, const std::string& col) const {
    const auto it = columns_.find(col);
    if (it == columns_.end()) throw ParseError(name_, 1, "missing column '" + col + "'");
    return rows_.at(row).fields[it->second];
  }

  double number(std::size_t row, const std::string& col) const {
    const auto v = optional_number(row, col);
    if (!v) throw ParseError(name_, line(row), "empty value in column '" + col + "'");
    return *v;
  }

  std::optional<double> optional_number(std::size_t row, const std::string& col) const {
    if (!has(col)) return std::nullopt;
    const std::string& s = text(row, col);
    if (s.empty()) return std::nullopt;
    double v = 0.0;
    const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size())
      throw ParseError(name_, line(row), "bad number '" + s + "' in column '" + col + "'");
    return v;
  }

  std::int64_t integer(std::size_t row, const std::string& col) const {
    const std::string& s = text(row, col);
    std::int64_t v = 0;
    const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || ec != std::errc() || p != s.data() + s.size())
      throw ParseError(name_, line(row), "bad integer '" + s + "' in column '" + col + "'");
    return v;
  }

  Date date(std::size_t row, const std::string& col) const {
    try {
      return parse_date(text(row, col));
    } catch (const InvalidInput& e) {
      throw ParseError(name_, line(row), e.what());
    }
  }

 private:
  std::string name_;
  std::vector<std::string> header_;
  std::map<std::string, std::size_t> columns_;
  std::vector<CsvRecord> rows_;
};

class CsvWriter {
 public:
  explicit CsvWriter(std::initializer_list<std::string> header) { row(std::vector<std::string>(header)); }

  CsvWriter& row(const std::vector<std::string>& fields) {
    for (std::size_t i = 0; i < fields.size(); ++i) {
      if (i) out_ += ',';
      out_ += quote(fields[i]);
    }
    out_ += '\n';
    return *this;
  }

  const std::string& str() const { return out_; }
  void save(const fs::path& path) const { write_file_atomic(path, out_); }

  static std::string quote(const std::string& f) {
    if (f.find_first_of(",\"\r\n") == std::string::npos) return f;
    std::string q = "\"";
    for (char c : f) {
      if (c == '"') q += '"';
      q += c;
    }
    return q + '"';
  }

 private:
  std::string out_;
};

}  // namespace gsp::io
