#pragma once

#include "stiffsearch/sim.hpp"

#include <charconv>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <system_error>
#include <vector>

namespace stiffsearch {

// Shortest round-trip decimal representation, locale-independent.
inline std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc()) throw Error("format_double: conversion failed");
  return std::string(buf, ptr);
}

inline double parse_double(std::string_view s, const std::string& what) {
  double v = 0.0;
  const char* first = s.data();
  const char* last = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last)
    throw ConfigError("could not parse number '" + std::string(s) + "' in " + what);
  return v;
}

inline long parse_int(std::string_view s, const std::string& what) {
  long v = 0;
  const char* first = s.data();
  const char* last = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last)
    throw ConfigError("could not parse integer '" + std::string(s) + "' in " + what);
  return v;
}

// Write via a temp file + rename so readers never observe a half-written file.
inline void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open '" + tmp.string() + "' for writing");
    out.write(content.data(), std::streamsize(content.size()));
    if (!out) throw Error("write failed for '" + tmp.string() + "'");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw Error("rename failed for '" + path.string() + "': " + ec.message());
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open '" + path.string() + "' for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  size_t start = 0;
  for (size_t i = 0; i <= s.size(); ++i) {
    if (i == s.size() || s[i] == sep) {
      out.emplace_back(s.substr(start, i - start));
      start = i + 1;
    }
  }
  return out;
}

inline std::string strip(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

// Field CSV layout: line 1 "nx,ny", line 2 "xmin,xmax,ymin,ymax", then ny rows
// of nx comma-separated values, rows ordered from ymin.
inline std::string field_to_csv(const DomainGrid& grid, const Eigen::VectorXd& values) {
  if (values.size() != grid.size())
    throw Error("field_to_csv: value count does not match grid");
  std::string out;
  out += std::to_string(grid.nx()) + "," + std::to_string(grid.ny()) + "\n";
  const Rect& b = grid.bounds();
  out += format_double(b.xmin) + "," + format_double(b.xmax) + "," +
         format_double(b.ymin) + "," + format_double(b.ymax) + "\n";
  for (int iy = 0; iy < grid.ny(); ++iy) {
    for (int ix = 0; ix < grid.nx(); ++ix) {
      if (ix) out += ",";
      out += format_double(values[grid.index(ix, iy)]);
    }
    out += "\n";
  }
  return out;
}

inline void save_field_csv(const std::filesystem::path& path, const DomainGrid& grid,
                           const Eigen::VectorXd& values) {
  write_file_atomic(path, field_to_csv(grid, values));
}

inline StiffnessField load_field_csv(const std::filesystem::path& path,
                                     bool require_nonnegative = true) {
  std::string text = read_file(path);
  std::vector<std::string> lines;
  for (const std::string& ln : split(text, '\n'))
    if (!strip(ln).empty()) lines.push_back(strip(ln));
  const std::string what = "field file '" + path.string() + "'";
  if (lines.size() < 3) throw ConfigError(what + " is truncated");

  std::vector<std::string> dims = split(lines[0], ',');
  if (dims.size() != 2) throw ConfigError(what + ": first line must be nx,ny");
  int nx = int(parse_int(strip(dims[0]), what));
  int ny = int(parse_int(strip(dims[1]), what));

  std::vector<std::string> bb = split(lines[1], ',');
  if (bb.size() != 4) throw ConfigError(what + ": second line must be xmin,xmax,ymin,ymax");
  Rect bounds{parse_double(strip(bb[0]), what), parse_double(strip(bb[1]), what),
              parse_double(strip(bb[2]), what), parse_double(strip(bb[3]), what)};

  DomainGrid grid;
  try {
    grid = DomainGrid(bounds, nx, ny);
  } catch (const Error& e) {
    throw ConfigError(what + ": " + e.what());
  }
  if (int(lines.size()) != 2 + ny)
    throw ConfigError(what + ": expected " + std::to_string(ny) + " value rows");

  StiffnessField field{grid, Eigen::VectorXd(grid.size())};
  for (int iy = 0; iy < ny; ++iy) {
    std::vector<std::string> row = split(lines[2 + iy], ',');
    if (int(row.size()) != nx)
      throw ConfigError(what + ": row " + std::to_string(iy) + " has " +
                        std::to_string(row.size()) + " values, expected " +
                        std::to_string(nx));
    for (int ix = 0; ix < nx; ++ix)
      field.values[grid.index(ix, iy)] = parse_double(strip(row[ix]), what);
  }
  if (require_nonnegative && (field.values.array() < 0.0).any())
    throw ConfigError(what + ": stiffness values must be non-negative");
  return field;
}

}  // namespace stiffsearch
