#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "wpca/common.hpp"

namespace wpca::csv {

// Shortest decimal form that parses back to the identical double.
inline std::string format_double(double x) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

inline void write_matrix(const std::filesystem::path& path, const Matrix& M) {
  std::ofstream out(path);
  if (!out) {
    throw InvalidArgument("csv: cannot open for writing: " + path.string());
  }
  for (Index i = 0; i < M.rows(); ++i) {
    for (Index j = 0; j < M.cols(); ++j) {
      if (j) out << ',';
      out << format_double(M(i, j));
    }
    out << '\n';
  }
  if (!out.good()) {
    throw InvalidArgument("csv: write failed: " + path.string());
  }
}

// Splits a line on commas; no quoting — the formats written here are pure
// numeric tables.
inline std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> fields;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(',', start);
    if (pos == std::string::npos) {
      fields.push_back(line.substr(start));
      break;
    }
    fields.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  if (!fields.empty() && !fields.back().empty() &&
      fields.back().back() == '\r') {
    fields.back().pop_back();
  }
  return fields;
}

inline double parse_double(const std::string& field,
                           const std::string& context) {
  std::size_t consumed = 0;
  double value = 0.0;
  try {
    value = std::stod(field, &consumed);
  } catch (const std::exception&) {
    throw InvalidArgument("csv: malformed number '" + field + "' " + context);
  }
  if (consumed != field.size()) {
    throw InvalidArgument("csv: malformed number '" + field + "' " + context);
  }
  return value;
}

inline Matrix read_matrix(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw InvalidArgument("csv: cannot open for reading: " + path.string());
  }
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    const auto fields = split_line(line);
    std::vector<double> row;
    row.reserve(fields.size());
    for (std::size_t j = 0; j < fields.size(); ++j) {
      row.push_back(parse_double(
          fields[j], "at " + path.string() + ":" + std::to_string(lineno) +
                         " column " + std::to_string(j + 1)));
    }
    if (!rows.empty() && row.size() != rows.front().size()) {
      throw InvalidArgument("csv: ragged row at " + path.string() + ":" +
                            std::to_string(lineno));
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) {
    throw InvalidArgument("csv: no data rows in " + path.string());
  }
  Matrix M(static_cast<Index>(rows.size()),
           static_cast<Index>(rows.front().size()));
  for (Index i = 0; i < M.rows(); ++i) {
    for (Index j = 0; j < M.cols(); ++j) {
      M(i, j) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
    }
  }
  return M;
}

}  // namespace wpca::csv
