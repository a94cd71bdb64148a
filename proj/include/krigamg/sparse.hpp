#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include <Eigen/Dense>

#include "krigamg/errors.hpp"

namespace krigamg {

using index_t = std::size_t;
using Vector = std::vector<double>;

struct Triplet {
  index_t row;
  index_t col;
  double value;
};

// Compressed sparse row matrix with sorted column indices and no stored
// zeros. Used both for the square SPD system matrix and the rectangular
// interpolation operator.
class SparseMatrix {
 public:
  SparseMatrix() = default;

  // Duplicates are summed; entries that sum to exactly zero are dropped.
  static SparseMatrix from_triplets(index_t rows, index_t cols,
                                    std::vector<Triplet> triplets) {
    for (const auto& t : triplets) {
      if (t.row >= rows || t.col >= cols)
        throw InputError("triplet index out of range");
      if (!std::isfinite(t.value)) throw InputError("non-finite matrix entry");
    }
    std::sort(triplets.begin(), triplets.end(), [](const Triplet& a, const Triplet& b) {
      return std::tie(a.row, a.col) < std::tie(b.row, b.col);
    });
    SparseMatrix m;
    m.rows_ = rows;
    m.cols_ = cols;
    m.row_ptr_.assign(rows + 1, 0);
    for (std::size_t k = 0; k < triplets.size();) {
      const index_t r = triplets[k].row;
      const index_t c = triplets[k].col;
      double sum = 0.0;
      while (k < triplets.size() && triplets[k].row == r && triplets[k].col == c)
        sum += triplets[k++].value;
      if (sum == 0.0) continue;
      m.col_idx_.push_back(c);
      m.values_.push_back(sum);
      ++m.row_ptr_[r + 1];
    }
    for (index_t r = 0; r < rows; ++r) m.row_ptr_[r + 1] += m.row_ptr_[r];
    m.symmetric_ = m.is_square() && m.check_symmetric(1e-12);
    return m;
  }

  static SparseMatrix identity(index_t n) {
    std::vector<Triplet> t;
    t.reserve(n);
    for (index_t i = 0; i < n; ++i) t.push_back({i, i, 1.0});
    return from_triplets(n, n, std::move(t));
  }

  static SparseMatrix from_dense(const Eigen::MatrixXd& dense) {
    std::vector<Triplet> t;
    for (Eigen::Index i = 0; i < dense.rows(); ++i)
      for (Eigen::Index j = 0; j < dense.cols(); ++j)
        if (dense(i, j) != 0.0)
          t.push_back({static_cast<index_t>(i), static_cast<index_t>(j), dense(i, j)});
    return from_triplets(static_cast<index_t>(dense.rows()),
                         static_cast<index_t>(dense.cols()), std::move(t));
  }

  index_t rows() const { return rows_; }
  index_t cols() const { return cols_; }
  index_t nnz() const { return values_.size(); }
  bool is_square() const { return rows_ == cols_; }
  bool symmetric() const { return symmetric_; }

  std::span<const index_t> row_ptr() const { return row_ptr_; }
  std::span<const index_t> col_idx() const { return col_idx_; }
  std::span<const double> values() const { return values_; }

  std::span<const index_t> row_cols(index_t r) const {
    return {col_idx_.data() + row_ptr_[r], row_ptr_[r + 1] - row_ptr_[r]};
  }
  std::span<const double> row_values(index_t r) const {
    return {values_.data() + row_ptr_[r], row_ptr_[r + 1] - row_ptr_[r]};
  }

  double at(index_t r, index_t c) const {
    const auto cols = row_cols(r);
    const auto it = std::lower_bound(cols.begin(), cols.end(), c);
    if (it == cols.end() || *it != c) return 0.0;
    return values_[row_ptr_[r] + static_cast<index_t>(it - cols.begin())];
  }

  double diagonal(index_t r) const { return at(r, r); }

  // y = A x
  void multiply(std::span<const double> x, std::span<double> y) const {
    for (index_t r = 0; r < rows_; ++r) {
      double s = 0.0;
      for (index_t k = row_ptr_[r]; k < row_ptr_[r + 1]; ++k) s += values_[k] * x[col_idx_[k]];
      y[r] = s;
    }
  }

  Vector operator*(std::span<const double> x) const {
    if (x.size() != cols_) throw InputError("dimension mismatch in matrix-vector product");
    Vector y(rows_);
    multiply(x, y);
    return y;
  }

  // y = A^T x
  Vector multiply_transpose(std::span<const double> x) const {
    if (x.size() != rows_) throw InputError("dimension mismatch in transposed product");
    Vector y(cols_, 0.0);
    for (index_t r = 0; r < rows_; ++r)
      for (index_t k = row_ptr_[r]; k < row_ptr_[r + 1]; ++k) y[col_idx_[k]] += values_[k] * x[r];
    return y;
  }

  SparseMatrix transpose() const {
    std::vector<Triplet> t;
    t.reserve(nnz());
    for (index_t r = 0; r < rows_; ++r)
      for (index_t k = row_ptr_[r]; k < row_ptr_[r + 1]; ++k) t.push_back({col_idx_[k], r, values_[k]});
    return from_triplets(cols_, rows_, std::move(t));
  }

  SparseMatrix scaled(double alpha) const {
    SparseMatrix m = *this;
    for (auto& v : m.values_) v *= alpha;
    return m;
  }

  Eigen::MatrixXd to_dense() const {
    Eigen::MatrixXd d = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(rows_),
                                              static_cast<Eigen::Index>(cols_));
    for (index_t r = 0; r < rows_; ++r)
      for (index_t k = row_ptr_[r]; k < row_ptr_[r + 1]; ++k)
        d(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(col_idx_[k])) = values_[k];
    return d;
  }

  bool structurally_symmetric() const {
    if (!is_square()) return false;
    for (index_t r = 0; r < rows_; ++r)
      for (index_t c : row_cols(r))
        if (!has_entry(c, r)) return false;
    return true;
  }

  bool has_entry(index_t r, index_t c) const {
    const auto cols = row_cols(r);
    return std::binary_search(cols.begin(), cols.end(), c);
  }

  // Largest |a_ij|, used for relative tolerances.
  double max_abs() const {
    double m = 0.0;
    for (double v : values_) m = std::max(m, std::abs(v));
    return m;
  }

  friend bool operator==(const SparseMatrix&, const SparseMatrix&) = default;

  // Values symmetric to rel_tol relative to max_abs().
  bool check_symmetric(double rel_tol) const {
    if (!structurally_symmetric()) return false;
    const double scale = std::max(max_abs(), 1e-300);
    for (index_t r = 0; r < rows_; ++r) {
      const auto cols = row_cols(r);
      const auto vals = row_values(r);
      for (std::size_t k = 0; k < cols.size(); ++k)
        if (std::abs(vals[k] - at(cols[k], r)) > rel_tol * scale) return false;
    }
    return true;
  }

 private:
  index_t rows_ = 0;
  index_t cols_ = 0;
  std::vector<index_t> row_ptr_{0};
  std::vector<index_t> col_idx_;
  std::vector<double> values_;
  bool symmetric_ = false;
};

// Throws unless `a` is square, structurally symmetric, and has a positive
// diagonal entry in every row.
inline void require_system_matrix(const SparseMatrix& a) {
  if (!a.is_square()) throw InputError("system matrix must be square");
  if (a.rows() == 0) throw InputError("system matrix is empty");
  if (!a.structurally_symmetric()) throw InputError("system matrix pattern is not symmetric");
  for (index_t i = 0; i < a.rows(); ++i)
    if (!(a.diagonal(i) > 0.0))
      throw InputError("diagonal entry of row " + std::to_string(i) + " is not positive");
}

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double norm2(std::span<const double> a) { return std::sqrt(dot(a, a)); }

// x^T A x
inline double energy(const SparseMatrix& a, std::span<const double> x) {
  const Vector ax = a * x;
  return dot(x, ax);
}

}  // namespace krigamg
