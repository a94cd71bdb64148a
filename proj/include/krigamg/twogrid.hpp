#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "krigamg/errors.hpp"
#include "krigamg/random.hpp"
#include "krigamg/smoother.hpp"
#include "krigamg/sparse.hpp"

namespace krigamg {

// C = A B with a dense accumulator per row.
inline SparseMatrix multiply(const SparseMatrix& a, const SparseMatrix& b) {
  if (a.cols() != b.rows()) throw InputError("dimension mismatch in sparse product");
  std::vector<double> acc(b.cols(), 0.0);
  std::vector<bool> used(b.cols(), false);
  std::vector<index_t> pattern;
  std::vector<Triplet> t;
  for (index_t r = 0; r < a.rows(); ++r) {
    const auto acols = a.row_cols(r);
    const auto avals = a.row_values(r);
    for (std::size_t k = 0; k < acols.size(); ++k) {
      const auto bcols = b.row_cols(acols[k]);
      const auto bvals = b.row_values(acols[k]);
      for (std::size_t l = 0; l < bcols.size(); ++l) {
        if (!used[bcols[l]]) {
          used[bcols[l]] = true;
          pattern.push_back(bcols[l]);
        }
        acc[bcols[l]] += avals[k] * bvals[l];
      }
    }
    for (index_t c : pattern) {
      t.push_back({r, c, acc[c]});
      acc[c] = 0.0;
      used[c] = false;
    }
    pattern.clear();
  }
  return SparseMatrix::from_triplets(a.rows(), b.cols(), std::move(t));
}

// A_c = P^T A P, averaged with its transpose.
inline SparseMatrix galerkin(const SparseMatrix& a, const SparseMatrix& p) {
  if (!a.is_square() || a.rows() != p.rows()) throw InputError("dimension mismatch in Galerkin product");
  const SparseMatrix pt = p.transpose();
  const SparseMatrix ac = multiply(pt, multiply(a, p));
  const SparseMatrix act = ac.transpose();
  std::vector<Triplet> t;
  t.reserve(ac.nnz() + act.nnz());
  for (index_t r = 0; r < ac.rows(); ++r) {
    for (std::size_t k = 0; k < ac.row_cols(r).size(); ++k) t.push_back({r, ac.row_cols(r)[k], 0.5 * ac.row_values(r)[k]});
    for (std::size_t k = 0; k < act.row_cols(r).size(); ++k) t.push_back({r, act.row_cols(r)[k], 0.5 * act.row_values(r)[k]});
  }
  return SparseMatrix::from_triplets(ac.rows(), ac.cols(), std::move(t));
}

// Post-smoothing color order. `symmetric` sweeps the colors in reverse,
// which makes the cycle a symmetric operator (needed by PCG); `repeated`
// applies the same ascending sweep again.
enum class SweepPairing { symmetric, repeated };

// Two-grid method with forward colored Gauss-Seidel pre-smoothing, Galerkin
// coarse correction solved by dense Cholesky, and post-smoothing.
class TwoGridOperator {
 public:
  TwoGridOperator(SparseMatrix a, SparseMatrix p, Coloring coloring, SweepPairing pairing = SweepPairing::symmetric)
      : a_(std::move(a)), p_(std::move(p)), coloring_(std::move(coloring)), pairing_(pairing) {
    if (!a_.is_square() || p_.rows() != a_.rows()) throw InputError("interpolation does not match the matrix");
    if (coloring_.color_of.size() != a_.rows()) throw InputError("coloring does not match the matrix");
    require_nonzero_diagonal(a_);
    pt_ = p_.transpose();
    ac_ = galerkin(a_, p_);
    if (ac_.rows() > 0) {
      coarse_ = Eigen::LLT<Eigen::MatrixXd>(ac_.to_dense());
      if (coarse_.info() != Eigen::Success) throw NumericalError("coarse operator is not positive definite");
    }
  }

  TwoGridOperator(SparseMatrix a, SparseMatrix p) : TwoGridOperator(a, std::move(p), greedy_coloring(a)) {}

  const SparseMatrix& matrix() const { return a_; }
  const SparseMatrix& interpolation() const { return p_; }
  const SparseMatrix& coarse_matrix() const { return ac_; }
  const Coloring& coloring() const { return coloring_; }
  SweepPairing pairing() const { return pairing_; }

  // Same coarse problem, other post-smoothing order.
  TwoGridOperator with_pairing(SweepPairing pairing) const {
    TwoGridOperator op = *this;
    op.pairing_ = pairing;
    return op;
  }
  index_t size() const { return a_.rows(); }
  index_t coarse_size() const { return ac_.rows(); }

  // x <- x + P A_c^{-1} P^T (b - A x)
  void coarse_correct(std::span<const double> b, std::span<double> x) const {
    if (ac_.rows() == 0) return;
    Vector r = a_ * std::span<const double>(x);
    for (index_t i = 0; i < r.size(); ++i) r[i] = b[i] - r[i];
    const Vector rc = pt_ * std::span<const double>(r);
    const Eigen::VectorXd ec = coarse_.solve(Eigen::Map<const Eigen::VectorXd>(rc.data(), static_cast<Eigen::Index>(rc.size())));
    const Vector e(ec.data(), ec.data() + ec.size());
    const Vector pe = p_ * std::span<const double>(e);
    for (index_t i = 0; i < x.size(); ++i) x[i] += pe[i];
  }

  // One V(1,1) cycle in place.
  void cycle(std::span<const double> b, std::span<double> x) const {
    colored_gauss_seidel_inplace(a_, coloring_, x, b, false);
    coarse_correct(b, x);
    colored_gauss_seidel_inplace(a_, coloring_, x, b, pairing_ == SweepPairing::symmetric);
  }

 private:
  SparseMatrix a_;
  SparseMatrix p_;
  SparseMatrix pt_;
  SparseMatrix ac_;
  Coloring coloring_;
  SweepPairing pairing_ = SweepPairing::symmetric;
  Eigen::LLT<Eigen::MatrixXd> coarse_;
};

inline Vector vcycle_apply(const TwoGridOperator& op, std::span<const double> b, Vector x0) {
  if (b.size() != op.size() || x0.size() != op.size()) throw InputError("dimension mismatch in cycle");
  op.cycle(b, x0);
  return x0;
}

struct RateEstimate {
  double rho = 0.0;        // A-norm ratio
  double rho_l2 = 0.0;     // Euclidean ratio of the same iterates
  index_t cycles = 0;
  bool stalled = false;    // stopped by the stall test, not the cycle cap
  bool diverged = false;
};

// Power iteration on the error propagator: e <- cycle(0, e), renormalized in
// the A-norm each step. Single-step ratios of a non-normal cycle oscillate
// for good, so rho is the geometric mean of the ratios over the second half
// of the run. The run stalls once the two quarters of that half agree to
// `stall_tol`, after at least `min_cycles` cycles.
inline RateEstimate estimate_asymptotic_rate(const TwoGridOperator& op, std::uint64_t seed, index_t max_cycles = 400,
                                             double stall_tol = 1e-3, index_t min_cycles = 200) {
  if (max_cycles < 10) throw InputError("max_cycles must be at least 10");
  if (min_cycles > max_cycles) throw InputError("min_cycles exceeds max_cycles");
  const index_t n = op.size();
  const SparseMatrix& a = op.matrix();
  Rng rng(seed);
  Vector e(n);
  for (auto& v : e) v = rng.normal();
  const Vector zero(n, 0.0);
  const auto anorm = [&](const Vector& v) { return std::sqrt(std::max(energy(a, v), 0.0)); };

  double scale = anorm(e);
  for (auto& v : e) v /= scale;
  std::vector<double> log_a, log_l2;
  // geometric mean of log ratios over [lo, hi)
  const auto gmean = [](const std::vector<double>& l, std::size_t lo, std::size_t hi) {
    double sum = 0.0;
    for (std::size_t j = lo; j < hi; ++j) sum += l[j];
    return std::exp(sum / static_cast<double>(hi - lo));
  };
  RateEstimate r;
  for (index_t k = 0; k < max_cycles; ++k) {
    const double l2_before = norm2(e);
    op.cycle(zero, e);
    const double ratio = anorm(e);  // previous A-norm is 1
    r.cycles = k + 1;
    if (!(ratio > 1e-300)) {  // error annihilated
      r.rho = ratio;
      r.rho_l2 = norm2(e) / l2_before;
      r.stalled = true;
      return r;
    }
    log_a.push_back(std::log(ratio));
    log_l2.push_back(std::log(norm2(e) / l2_before));
    for (auto& v : e) v /= ratio;
    const std::size_t len = log_a.size(), half = len / 2, quarter = (len + half) / 2;
    if (len >= std::max<index_t>(min_cycles, 4) &&
        std::abs(gmean(log_a, half, quarter) - gmean(log_a, quarter, len)) < stall_tol) {
      r.stalled = true;
      break;
    }
  }
  const std::size_t half = log_a.size() / 2;
  r.rho = gmean(log_a, half, log_a.size());
  r.rho_l2 = gmean(log_l2, half, log_l2.size());
  r.diverged = r.rho > 1.0;
  return r;
}

struct PcgReport {
  index_t iterations = 0;
  bool converged = false;
  bool indefinite_preconditioner = false;
  std::vector<double> residual_history;  // ||r_k||_2, k = 0..iterations
};

using Preconditioner = std::function<void(std::span<const double> r, std::span<double> z)>;

// Preconditioned conjugate gradients from x = 0; stops when
// ||r_k|| <= reduction * ||r_0||.
inline PcgReport pcg(const SparseMatrix& a, std::span<const double> b, const Preconditioner& precondition,
                     double reduction = 1e-8, index_t max_it = 1000, Vector* solution = nullptr) {
  const index_t n = a.rows();
  if (b.size() != n) throw InputError("dimension mismatch in PCG");
  for (double v : b)
    if (!std::isfinite(v)) throw InputError("right-hand side is not finite");
  Vector x(n, 0.0), r(b.begin(), b.end()), z(n), p(n), q(n);
  PcgReport rep;
  const double r0 = norm2(r);
  rep.residual_history.push_back(r0);
  if (r0 == 0.0) {
    rep.converged = true;
    if (solution) *solution = x;
    return rep;
  }
  precondition(r, z);
  double rz = dot(r, z);
  if (!(rz > 0.0)) {
    rep.indefinite_preconditioner = true;
    return rep;
  }
  p = z;
  for (index_t k = 0; k < max_it; ++k) {
    a.multiply(p, q);
    const double alpha = rz / dot(p, q);
    for (index_t i = 0; i < n; ++i) {
      x[i] += alpha * p[i];
      r[i] -= alpha * q[i];
    }
    const double rn = norm2(r);
    rep.residual_history.push_back(rn);
    rep.iterations = k + 1;
    if (rn <= reduction * r0) {
      rep.converged = true;
      break;
    }
    precondition(r, z);
    const double rz_new = dot(r, z);
    if (!(rz_new > 0.0)) {
      rep.indefinite_preconditioner = true;
      break;
    }
    const double beta = rz_new / rz;
    rz = rz_new;
    for (index_t i = 0; i < n; ++i) p[i] = z[i] + beta * p[i];
  }
  if (solution) *solution = x;
  return rep;
}

// PCG preconditioned by one two-grid cycle with zero initial guess. The
// cycle must use symmetric sweep pairing.
inline PcgReport pcg_solve(const TwoGridOperator& op, std::span<const double> b, double reduction = 1e-8,
                           index_t max_it = 1000, Vector* solution = nullptr) {
  if (op.pairing() != SweepPairing::symmetric) throw InputError("PCG needs a symmetric two-grid cycle");
  const Preconditioner m = [&op](std::span<const double> r, std::span<double> z) {
    std::fill(z.begin(), z.end(), 0.0);
    op.cycle(r, z);
  };
  return pcg(op.matrix(), b, m, reduction, max_it, solution);
}

inline PcgReport cg_solve(const SparseMatrix& a, std::span<const double> b, double reduction = 1e-8,
                          index_t max_it = 10000) {
  const Preconditioner id = [](std::span<const double> r, std::span<double> z) { std::copy(r.begin(), r.end(), z.begin()); };
  return pcg(a, b, id, reduction, max_it);
}

}  // namespace krigamg
