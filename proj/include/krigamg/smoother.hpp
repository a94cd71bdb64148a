#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "krigamg/errors.hpp"
#include "krigamg/random.hpp"
#include "krigamg/sparse.hpp"

namespace krigamg {

struct Coloring {
  std::vector<index_t> color_of;
  index_t num_colors = 0;
  // members[c] lists the variables of color c in ascending order.
  std::vector<std::vector<index_t>> members;

  bool valid_for(const SparseMatrix& a) const {
    for (index_t i = 0; i < a.rows(); ++i)
      for (index_t j : a.row_cols(i))
        if (j != i && color_of[i] == color_of[j]) return false;
    return true;
  }
};

// First-fit coloring in natural index order.
inline Coloring greedy_coloring(const SparseMatrix& a) {
  const index_t n = a.rows();
  constexpr auto kUncolored = static_cast<index_t>(-1);
  Coloring c;
  c.color_of.assign(n, kUncolored);
  std::vector<index_t> mark;  // mark[color] == i + 1 when a neighbour of i uses it
  for (index_t i = 0; i < n; ++i) {
    for (index_t j : a.row_cols(i)) {
      if (j == i || c.color_of[j] == kUncolored) continue;
      if (c.color_of[j] >= mark.size()) mark.resize(c.color_of[j] + 1, 0);
      mark[c.color_of[j]] = i + 1;
    }
    index_t color = 0;
    while (color < mark.size() && mark[color] == i + 1) ++color;
    c.color_of[i] = color;
    c.num_colors = std::max(c.num_colors, color + 1);
  }
  c.members.resize(c.num_colors);
  for (index_t i = 0; i < n; ++i) c.members[c.color_of[i]].push_back(i);
  return c;
}

// One colored Gauss-Seidel sweep in place. Variables of one color are
// mutually non-adjacent, so updating them in place equals a simultaneous
// (Jacobi) update within the color.
inline void colored_gauss_seidel_inplace(const SparseMatrix& a, const Coloring& coloring,
                                         std::span<double> x, std::span<const double> b,
                                         bool reverse = false) {
  const index_t nc = coloring.num_colors;
  for (index_t step = 0; step < nc; ++step) {
    const index_t color = reverse ? nc - 1 - step : step;
    for (index_t i : coloring.members[color]) {
      const auto cols = a.row_cols(i);
      const auto vals = a.row_values(i);
      double diag = 0.0;
      double s = b[i];
      for (std::size_t k = 0; k < cols.size(); ++k) {
        if (cols[k] == i)
          diag = vals[k];
        else
          s -= vals[k] * x[cols[k]];
      }
      x[i] = s / diag;
    }
  }
}

inline void require_nonzero_diagonal(const SparseMatrix& a) {
  for (index_t i = 0; i < a.rows(); ++i)
    if (a.diagonal(i) == 0.0) throw NumericalError("zero diagonal entry in row " + std::to_string(i));
}

inline Vector colored_gauss_seidel_sweep(const SparseMatrix& a, const Coloring& coloring,
                                         Vector x, std::span<const double> b, bool reverse = false) {
  if (x.size() != a.rows() || b.size() != a.rows() || coloring.color_of.size() != a.rows())
    throw InputError("dimension mismatch in Gauss-Seidel sweep");
  require_nonzero_diagonal(a);
  colored_gauss_seidel_inplace(a, coloring, x, b, reverse);
  return x;
}

// K smoothed random vectors stored variable-major: value(i, k) = v_i^(k).
struct TestVectorSet {
  index_t n = 0;
  index_t count = 0;  // K
  index_t sweeps = 0;  // nu
  std::uint64_t seed = 0;
  std::vector<double> data;

  double value(index_t i, index_t k) const { return data[i * count + k]; }
  std::span<const double> row(index_t i) const { return {data.data() + i * count, count}; }

  Vector column(index_t k) const {
    Vector v(n);
    for (index_t i = 0; i < n; ++i) v[i] = value(i, k);
    return v;
  }

  static TestVectorSet from_columns(const std::vector<Vector>& columns, index_t sweeps = 0,
                                    std::uint64_t seed = 0) {
    if (columns.empty()) throw InputError("need at least one test vector");
    TestVectorSet v;
    v.n = columns.front().size();
    v.count = columns.size();
    v.sweeps = sweeps;
    v.seed = seed;
    v.data.resize(v.n * v.count);
    for (index_t k = 0; k < v.count; ++k) {
      if (columns[k].size() != v.n) throw InputError("test vectors differ in length");
      for (index_t i = 0; i < v.n; ++i) v.data[i * v.count + k] = columns[k][i];
    }
    return v;
  }
};

// Column k starts from N(0,1) noise drawn from its own derived stream, then
// receives `sweeps` forward colored Gauss-Seidel sweeps with zero right-hand
// side.
inline TestVectorSet generate_test_vectors(const SparseMatrix& a, const Coloring& coloring,
                                           index_t count, index_t sweeps, std::uint64_t seed) {
  if (count < 1) throw InputError("need at least one test vector");
  require_nonzero_diagonal(a);
  const index_t n = a.rows();
  const Vector zero(n, 0.0);
  std::vector<Vector> columns;
  columns.reserve(count);
  for (index_t k = 0; k < count; ++k) {
    Rng rng(derive_seed(seed, k));
    Vector v(n);
    for (auto& x : v) x = rng.normal();
    for (index_t s = 0; s < sweeps; ++s) colored_gauss_seidel_inplace(a, coloring, v, zero);
    columns.push_back(std::move(v));
  }
  return TestVectorSet::from_columns(columns, sweeps, seed);
}

inline TestVectorSet generate_test_vectors(const SparseMatrix& a, index_t count, index_t sweeps,
                                           std::uint64_t seed) {
  return generate_test_vectors(a, greedy_coloring(a), count, sweeps, seed);
}

// n rows, K comma-separated columns.
inline void write_test_vectors_csv(const TestVectorSet& v, std::ostream& out) {
  char buf[32];
  for (index_t i = 0; i < v.n; ++i) {
    for (index_t k = 0; k < v.count; ++k) {
      std::snprintf(buf, sizeof buf, "%.17g", v.value(i, k));
      out << (k ? "," : "") << buf;
    }
    out << '\n';
  }
}

}  // namespace krigamg
