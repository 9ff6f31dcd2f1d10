#pragma once

// Minimal RFC 4180 CSV: quoted fields, doubled quotes, header row.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <istream>
#include <limits>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "plclab/error.hpp"

namespace plclab::csv {

using Row = std::vector<std::string>;

inline std::string escape(const std::string& field) {
  if (field.find_first_of(",\"\n\r") == std::string::npos) return field;
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

inline void write_row(std::ostream& os, const Row& row) {
  for (std::size_t i = 0; i < row.size(); ++i) {
    if (i) os << ',';
    os << escape(row[i]);
  }
  os << '\n';
}

// Parses all records. Leading/trailing spaces of unquoted fields are kept
// trimmed so hand-edited files with ", " separators still load.
inline std::vector<Row> parse(std::istream& is) {
  std::vector<Row> rows;
  Row row;
  std::string field;
  bool quoted = false;
  bool was_quoted = false;
  bool any = false;
  auto trim = [](std::string s) {
    const auto b = s.find_first_not_of(" \t");
    if (b == std::string::npos) return std::string();
    const auto e = s.find_last_not_of(" \t");
    return s.substr(b, e - b + 1);
  };
  auto end_field = [&] {
    row.push_back(was_quoted ? field : trim(field));
    field.clear();
    was_quoted = false;
  };
  auto end_row = [&] {
    end_field();
    if (!(row.size() == 1 && row[0].empty())) rows.push_back(row);
    row.clear();
  };
  char c;
  while (is.get(c)) {
    any = true;
    if (quoted) {
      if (c == '"') {
        if (is.peek() == '"') {
          is.get(c);
          field += '"';
        } else {
          quoted = false;
        }
      } else {
        field += c;
      }
    } else if (c == '"') {
      quoted = true;
      was_quoted = true;
      field.clear();
    } else if (c == ',') {
      end_field();
    } else if (c == '\n') {
      end_row();
    } else if (c != '\r') {
      field += c;
    }
  }
  if (quoted) throw Error("csv: unterminated quoted field");
  if (any && (!field.empty() || !row.empty())) end_row();
  return rows;
}

// Header-indexed table.
struct Table {
  Row header;
  std::vector<Row> rows;

  std::size_t column(const std::string& name) const {
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (header[i] == name) return i;
    }
    throw Error("csv: missing column '" + name + "'");
  }
  bool has_column(const std::string& name) const {
    for (const auto& h : header) {
      if (h == name) return true;
    }
    return false;
  }
};

inline Table read_table(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open csv: " + path.string());
  auto rows = parse(in);
  if (rows.empty()) throw Error("csv: empty file " + path.string());
  Table t;
  t.header = std::move(rows.front());
  for (std::size_t i = 1; i < rows.size(); ++i) {
    if (rows[i].size() != t.header.size()) {
      throw Error("csv: row " + std::to_string(i + 1) + " of " +
                  path.string() + " has " + std::to_string(rows[i].size()) +
                  " fields, expected " + std::to_string(t.header.size()));
    }
    t.rows.push_back(std::move(rows[i]));
  }
  return t;
}

inline void write_table(const Table& t, const std::filesystem::path& path) {
  if (path.has_parent_path()) {
    std::filesystem::create_directories(path.parent_path());
  }
  std::ofstream out(path);
  if (!out) throw Error("cannot write csv: " + path.string());
  write_row(out, t.header);
  for (const auto& r : t.rows) write_row(out, r);
}

// Shortest round-trip decimal for doubles; "inf"/"-inf"/"nan" spelled out.
inline std::string format_double(double v) {
  if (v == std::numeric_limits<double>::infinity()) return "inf";
  if (v == -std::numeric_limits<double>::infinity()) return "-inf";
  if (v != v) return "nan";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline double parse_double(const std::string& s) {
  if (s == "inf") return std::numeric_limits<double>::infinity();
  if (s == "-inf") return -std::numeric_limits<double>::infinity();
  try {
    std::size_t used = 0;
    double v = std::stod(s, &used);
    if (used != s.size()) throw Error("csv: bad number '" + s + "'");
    return v;
  } catch (const std::invalid_argument&) {
    throw Error("csv: bad number '" + s + "'");
  } catch (const std::out_of_range&) {
    throw Error("csv: number out of range '" + s + "'");
  }
}

}  // namespace plclab::csv
