#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>
#include <utility>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "krigamg/covariance.hpp"
#include "krigamg/errors.hpp"
#include "krigamg/smoother.hpp"
#include "krigamg/sparse.hpp"

namespace krigamg {

enum class MeanHandling { zero_mean, blup };

// Covariance of (X_c for c in C_i, X_i): the fine variable is the last
// row/column.
struct LocalCovariance {
  enum class Source { empirical, parametric };

  Eigen::MatrixXd matrix;
  Source source = Source::parametric;
  bool regularized = false;
  double epsilon = 0.0;
  // Cholesky of the full (|C_i| + 1)-square matrix succeeded.
  bool positive_definite = true;
  bool ill_conditioned = false;

  Eigen::Index q() const { return matrix.rows() - 1; }
  Eigen::MatrixXd coarse_block() const { return matrix.topLeftCorner(q(), q()); }
  Eigen::VectorXd cross() const { return matrix.col(q()).head(q()); }
  double fine_variance() const { return matrix(q(), q()); }
};

// Pseudo-distance lookup used by parametric sources.
using DistanceFn = std::function<double(index_t, index_t)>;

namespace detail {

inline bool cholesky_ok(const Eigen::MatrixXd& m, bool* ill_conditioned = nullptr) {
  if (m.rows() == 0) return true;
  Eigen::LLT<Eigen::MatrixXd> llt(m);
  if (llt.info() != Eigen::Success) return false;
  const auto d = llt.matrixLLT().diagonal().cwiseAbs();
  // Pivots at roundoff level mean numerically rank deficient, even though
  // the factorization ran through.
  const double ratio2 = std::pow(d.maxCoeff() / d.minCoeff(), 2);
  if (!(d.minCoeff() > 0.0) || !(ratio2 < 1e14)) return false;
  if (ill_conditioned) *ill_conditioned = ratio2 > 1e12;
  return true;
}

// Solves the SPD system m x = rhs by Cholesky, falling back to the
// pivoted LDL^T factorization. Throws when both fail.
inline Eigen::MatrixXd spd_solve(const Eigen::MatrixXd& m, const Eigen::MatrixXd& rhs) {
  Eigen::LLT<Eigen::MatrixXd> llt(m);
  if (llt.info() == Eigen::Success) return llt.solve(rhs);
  Eigen::LDLT<Eigen::MatrixXd> ldlt(m);
  if (ldlt.info() == Eigen::Success && ldlt.isPositive()) {
    const auto d = ldlt.vectorD().cwiseAbs();
    if (d.minCoeff() > 1e-14 * std::max(1.0, d.maxCoeff())) return ldlt.solve(rhs);
  }
  throw NumericalError("local covariance matrix is singular");
}

}  // namespace detail

// Fills the local covariance over C_i + {i}. Empirical sources get one
// epsilon * I regularization pass (epsilon relative to the largest local
// diagonal entry) when the matrix fails to factor; parametric sources are
// only flagged.
inline LocalCovariance assemble_local_cov(index_t i, std::span<const index_t> coarse,
                                          const CovarianceSource& source, const DistanceFn& distance = {}) {
  const auto q = static_cast<Eigen::Index>(coarse.size());
  std::vector<index_t> ids(coarse.begin(), coarse.end());
  ids.push_back(i);
  LocalCovariance local;
  local.matrix.resize(q + 1, q + 1);
  if (const auto* emp = std::get_if<EmpiricalCovariance>(&source)) {
    local.source = LocalCovariance::Source::empirical;
    for (Eigen::Index a = 0; a <= q; ++a)
      for (Eigen::Index b = 0; b <= a; ++b)
        local.matrix(a, b) = local.matrix(b, a) = emp->entry(ids[a], ids[b]);
    if (!detail::cholesky_ok(local.matrix, &local.ill_conditioned)) {
      const double scale = std::max(local.matrix.diagonal().maxCoeff(), 1e-300);
      local.epsilon = emp->epsilon * scale;
      local.matrix.diagonal().array() += local.epsilon;
      local.regularized = true;
      local.positive_definite = detail::cholesky_ok(local.matrix, &local.ill_conditioned);
    }
  } else {
    const auto& model = std::get<ParametricModel>(source);
    local.source = LocalCovariance::Source::parametric;
    if (q > 0 && !distance) throw InputError("parametric covariance needs a distance lookup");
    for (Eigen::Index a = 0; a <= q; ++a) {
      local.matrix(a, a) = model.sigma2;
      for (Eigen::Index b = 0; b < a; ++b)
        local.matrix(a, b) = local.matrix(b, a) = covariance_from_model(model, distance(ids[a], ids[b]));
    }
    local.positive_definite = detail::cholesky_ok(local.matrix, &local.ill_conditioned);
  }
  return local;
}

struct KrigingStencil {
  index_t fine = 0;
  std::vector<index_t> coarse;
  std::vector<double> weights;
  double variance = 0.0;
  MeanHandling mean_handling = MeanHandling::blup;
};

// Known zero mean: w = C_{i,C} C_C^{-1}, variance = C_ii - w C_{C,i}.
inline KrigingStencil simple_kriging(index_t i, std::span<const index_t> coarse, const LocalCovariance& local) {
  if (std::find(coarse.begin(), coarse.end(), i) != coarse.end())
    throw InputError("fine variable may not be part of its own interpolatory set");
  KrigingStencil s{i, {coarse.begin(), coarse.end()}, {}, local.fine_variance(), MeanHandling::zero_mean};
  if (coarse.empty()) return s;
  const Eigen::VectorXd c = local.cross();
  const Eigen::VectorXd w = detail::spd_solve(local.coarse_block(), c);
  s.weights.assign(w.data(), w.data() + w.size());
  s.variance = local.fine_variance() - w.dot(c);
  return s;
}

// Unknown constant mean (BLUP). Solves the bordered system
//   [C_C 1; 1^T 0] [w; lambda] = [C_{C,i}; 1]
// so the weights sum to one; variance = C_ii - w^T C_{C,i} - lambda.
inline KrigingStencil ordinary_kriging(index_t i, std::span<const index_t> coarse, const LocalCovariance& local) {
  if (std::find(coarse.begin(), coarse.end(), i) != coarse.end())
    throw InputError("fine variable may not be part of its own interpolatory set");
  KrigingStencil s{i, {coarse.begin(), coarse.end()}, {}, local.fine_variance(), MeanHandling::blup};
  if (coarse.empty()) return s;
  const Eigen::Index q = local.q();
  Eigen::MatrixXd bordered = Eigen::MatrixXd::Zero(q + 1, q + 1);
  bordered.topLeftCorner(q, q) = local.coarse_block();
  bordered.col(q).head(q).setOnes();
  bordered.row(q).head(q).setOnes();
  Eigen::VectorXd rhs(q + 1);
  rhs.head(q) = local.cross();
  rhs(q) = 1.0;
  Eigen::FullPivLU<Eigen::MatrixXd> lu(bordered);
  lu.setThreshold(1e-13);
  if (!lu.isInvertible()) throw NumericalError("singular ordinary Kriging system");
  const Eigen::VectorXd sol = lu.solve(rhs);
  const Eigen::VectorXd w = sol.head(q);
  s.weights.assign(w.data(), w.data() + q);
  s.variance = local.fine_variance() - w.dot(rhs.head(q)) - sol(q);
  return s;
}

inline KrigingStencil krige(index_t i, std::span<const index_t> coarse, const LocalCovariance& local,
                            MeanHandling mean) {
  return mean == MeanHandling::blup ? ordinary_kriging(i, coarse, local) : simple_kriging(i, coarse, local);
}

// ---------------------------------------------------------------------------
// Least-squares interpolation quantities (zero-mean convention)
// ---------------------------------------------------------------------------

struct PairwiseStrength {
  double weight;    // p#_ij
  double residual;  // (sigma#_ij)^2 = 1 - X_ij^2
};

inline PairwiseStrength ls_pairwise_strength(const TestVectorSet& v, index_t i, index_t j) {
  const double vij = dot(v.row(i), v.row(j));
  const double vii = dot(v.row(i), v.row(i));
  const double vjj = dot(v.row(j), v.row(j));
  if (!(vjj > 0.0) || !(vii > 0.0)) throw InputError("zero-norm test vector row");
  const double corr = vij / std::sqrt(vii * vjj);
  return {vij / vjj, 1.0 - corr * corr};
}

struct MultiInterpolation {
  std::vector<double> weights;  // p#_{i,C_i}
  double residual = 0.0;        // Schur complement C_ii - C_{i,C} C_C^{-1} C_{C,i}
};

inline MultiInterpolation ls_multi_interpolation(const TestVectorSet& v, index_t i, std::span<const index_t> coarse) {
  if (coarse.empty()) throw InputError("interpolatory set is empty");
  if (v.count < coarse.size()) throw NumericalError("Gram matrix is singular: fewer test vectors than interpolatory variables");
  const auto q = static_cast<Eigen::Index>(coarse.size());
  Eigen::MatrixXd cc(q, q);
  Eigen::VectorXd ci(q);
  for (Eigen::Index a = 0; a < q; ++a) {
    ci(a) = empirical_cov_entry(v, coarse[a], i, MeanMode::zero);
    for (Eigen::Index b = 0; b <= a; ++b)
      cc(a, b) = cc(b, a) = empirical_cov_entry(v, coarse[a], coarse[b], MeanMode::zero);
  }
  Eigen::LLT<Eigen::MatrixXd> llt(cc);
  if (llt.info() != Eigen::Success) throw NumericalError("Gram matrix is singular");
  const auto d = llt.matrixLLT().diagonal().cwiseAbs();
  if (d.minCoeff() <= 1e-7 * d.maxCoeff()) throw NumericalError("Gram matrix is singular");
  const Eigen::VectorXd w = llt.solve(ci);
  MultiInterpolation out;
  out.weights.assign(w.data(), w.data() + q);
  out.residual = empirical_cov_entry(v, i, i, MeanMode::zero) - w.dot(ci);
  return out;
}

}  // namespace krigamg
