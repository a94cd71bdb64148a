#pragma once

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <cstdlib>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "krigamg/errors.hpp"
#include "krigamg/problem.hpp"
#include "krigamg/sparse.hpp"

namespace krigamg {

namespace detail {

inline std::string lowercase(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

// Shortest decimal text that parses back to the same double.
inline std::string exact(double v) {
  char buf[32];
  for (int precision = 15; precision <= 17; ++precision) {
    std::snprintf(buf, sizeof buf, "%.*g", precision, v);
    if (std::strtod(buf, nullptr) == v) break;
  }
  return buf;
}

}  // namespace detail

// Reads a real coordinate Matrix Market file. Symmetric files are expanded to
// full storage; general files are returned as stored.
inline SparseMatrix read_matrix_market(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open matrix file " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw InputError("empty matrix file " + path.string());
  std::istringstream banner(detail::lowercase(line));
  std::string tag, object, format, field, symmetry;
  banner >> tag >> object >> format >> field >> symmetry;
  if (tag != "%%matrixmarket" || object != "matrix")
    throw InputError("missing MatrixMarket banner in " + path.string());
  if (format != "coordinate") throw InputError("only coordinate Matrix Market files are supported");
  if (field != "real" && field != "integer" && field != "double")
    throw InputError("unsupported Matrix Market field '" + field + "'");
  if (symmetry != "symmetric" && symmetry != "general")
    throw InputError("unsupported Matrix Market symmetry '" + symmetry + "'");
  const bool symmetric = symmetry == "symmetric";

  while (std::getline(in, line) && (line.empty() || line[0] == '%')) {
  }
  std::istringstream size_line(line);
  long long rows = 0, cols = 0, entries = 0;
  if (!(size_line >> rows >> cols >> entries) || rows <= 0 || cols <= 0 || entries < 0)
    throw InputError("malformed Matrix Market size line");
  if (symmetric && rows != cols) throw InputError("symmetric Matrix Market file is not square");

  std::vector<Triplet> t;
  t.reserve(static_cast<std::size_t>(symmetric ? 2 * entries : entries));
  for (long long k = 0; k < entries; ++k) {
    long long r = 0, c = 0;
    double v = 0.0;
    if (!(in >> r >> c >> v)) throw InputError("truncated Matrix Market entry list");
    if (r < 1 || c < 1 || r > rows || c > cols) throw InputError("Matrix Market index out of range");
    const auto ri = static_cast<index_t>(r - 1);
    const auto ci = static_cast<index_t>(c - 1);
    t.push_back({ri, ci, v});
    if (symmetric && ri != ci) t.push_back({ci, ri, v});
  }
  return SparseMatrix::from_triplets(static_cast<index_t>(rows), static_cast<index_t>(cols),
                                     std::move(t));
}

// Writes symmetric matrices as the lower triangle with the `symmetric`
// qualifier and everything else as `general`.
inline void write_matrix_market(const SparseMatrix& a, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write matrix file " + path.string());
  const bool symmetric = a.symmetric();
  index_t count = 0;
  for (index_t r = 0; r < a.rows(); ++r)
    for (index_t c : a.row_cols(r))
      if (!symmetric || c <= r) ++count;
  out << "%%MatrixMarket matrix coordinate real " << (symmetric ? "symmetric" : "general") << '\n';
  out << a.rows() << ' ' << a.cols() << ' ' << count << '\n';
  for (index_t r = 0; r < a.rows(); ++r) {
    const auto cols = a.row_cols(r);
    const auto vals = a.row_values(r);
    for (std::size_t k = 0; k < cols.size(); ++k) {
      if (symmetric && cols[k] > r) continue;
      out << r + 1 << ' ' << cols[k] + 1 << ' ' << detail::exact(vals[k]) << '\n';
    }
  }
  if (!out) throw InputError("write failed for " + path.string());
}

// Coordinates file: one "i x y" line per unknown, 1-based, any order.
inline std::vector<Point> read_coordinates(const std::filesystem::path& path, index_t n) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open coordinates file " + path.string());
  std::vector<Point> coords(n);
  std::vector<bool> seen(n, false);
  index_t count = 0;
  std::string line;
  while (std::getline(in, line)) {
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '%' || line[first] == '#') continue;
    std::istringstream fields(line);
    long long i = 0;
    double x = 0.0, y = 0.0;
    if (!(fields >> i >> x >> y)) throw InputError("malformed coordinates line: " + line);
    if (i < 1 || static_cast<index_t>(i) > n)
      throw InputError("coordinate index " + std::to_string(i) + " does not match matrix dimension " +
                       std::to_string(n));
    const auto k = static_cast<index_t>(i - 1);
    if (seen[k]) throw InputError("duplicate coordinate index " + std::to_string(i));
    seen[k] = true;
    coords[k] = {x, y};
    ++count;
  }
  if (count != n)
    throw InputError("coordinates file has " + std::to_string(count) + " entries, matrix has " +
                     std::to_string(n) + " rows");
  return coords;
}

inline void write_coordinates(const std::vector<Point>& coords, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write coordinates file " + path.string());
  for (index_t i = 0; i < coords.size(); ++i)
    out << i + 1 << ' ' << detail::exact(coords[i][0]) << ' ' << detail::exact(coords[i][1]) << '\n';
}

// Loads an SPD system with optional coordinates.
inline ProblemInstance load_matrix_market(const std::filesystem::path& path,
                                          const std::optional<std::filesystem::path>& coords_path = {}) {
  SparseMatrix a = read_matrix_market(path);
  if (!a.is_square()) throw InputError("system matrix must be square");
  if (!a.symmetric()) throw InputError("matrix in " + path.string() + " is not symmetric");
  require_system_matrix(a);
  ProblemInstance p{std::move(a), std::nullopt, "external"};
  if (coords_path) p.coords = read_coordinates(*coords_path, p.size());
  return p;
}

inline void save_matrix_market(const SparseMatrix& a, const std::filesystem::path& path) {
  write_matrix_market(a, path);
}

}  // namespace krigamg
