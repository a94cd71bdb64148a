#include <gtest/gtest.h>

#include "checks.hpp"

using namespace krigamg;

namespace {

SparseMatrix tridiag3() {
  return SparseMatrix::from_triplets(3, 3, {{0, 0, 2}, {0, 1, -1}, {1, 0, -1}, {1, 1, 2}, {1, 2, -1}, {2, 1, -1}, {2, 2, 2}});
}

// Kriging two-grid operator on the benchmark grid with an exponential model.
TwoGridOperator benchmark_operator(const ProblemInstance& p, SweepPairing pairing) {
  CoarsenOptions o;
  o.target_coarse = p.size() / 4;
  const auto r = coarsen(DistanceOracle::graph(p.matrix), ParametricModel{ModelFamily::exponential, 1.0, 3.0}, o);
  return TwoGridOperator(p.matrix, r.interpolation.p, greedy_coloring(p.matrix), pairing);
}

}  // namespace

TEST(Galerkin, IdentityInterpolation) {
  const auto a = tridiag3();
  EXPECT_TRUE((galerkin(a, SparseMatrix::identity(3)).to_dense() - a.to_dense()).isZero(0.0));
}

TEST(Galerkin, ConstantColumn) {
  const auto p = SparseMatrix::from_triplets(3, 1, {{0, 0, 1}, {1, 0, 1}, {2, 0, 1}});
  const auto ac = galerkin(tridiag3(), p);
  ASSERT_EQ(ac.rows(), 1u);
  EXPECT_EQ(ac.at(0, 0), 2.0);
}

TEST(Galerkin, RandomInterpolationMatchesDense) {
  Rng rng(17);
  const auto a = generate_fd_square(5, {1.0, 1e-2, 0.0}).matrix;
  std::vector<Triplet> t;
  for (index_t i = 0; i < 25; ++i)
    for (int k = 0; k < 3; ++k) t.push_back({i, rng.below(8), rng.normal()});
  const auto p = SparseMatrix::from_triplets(25, 8, std::move(t));
  const Eigen::MatrixXd ref = p.to_dense().transpose() * a.to_dense() * p.to_dense();
  const Eigen::MatrixXd got = galerkin(a, p).to_dense();
  EXPECT_LE((got - ref).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_TRUE(got.isApprox(got.transpose(), 0.0));
  EXPECT_THROW(galerkin(a, SparseMatrix::identity(4)), InputError);
}

TEST(Cycle, ZeroIsFixedPoint) {
  const auto g = checks::small_two_grid();
  const TwoGridOperator op(g.problem.matrix, g.coarsening.interpolation.p, g.coloring);
  const Vector x = vcycle_apply(op, Vector(16, 0.0), Vector(16, 0.0));
  for (double v : x) EXPECT_EQ(v, 0.0);
  EXPECT_THROW(vcycle_apply(op, Vector(15, 0.0), Vector(16, 0.0)), InputError);
}

TEST(Cycle, IdentityInterpolationSolvesExactly) {
  const auto p = generate_fd_square(6, {1.0, 1.0, 0.0});
  const TwoGridOperator op(p.matrix, SparseMatrix::identity(36), greedy_coloring(p.matrix));
  Rng rng(2);
  Vector b(36), x0(36);
  for (auto& v : b) v = rng.normal();
  for (auto& v : x0) v = rng.normal();
  const Vector x = vcycle_apply(op, b, x0);
  const Vector r = p.matrix * std::span<const double>(x);
  for (index_t i = 0; i < 36; ++i) EXPECT_NEAR(r[i], b[i], 1e-10);
  EXPECT_LE(estimate_asymptotic_rate(op, 3).rho, 1e-8);
}

TEST(Cycle, MatchesDensePropagatorBothPairings) {
  EXPECT_LE(checks::cycle_vs_dense(SweepPairing::repeated), 1e-10);
  EXPECT_LE(checks::cycle_vs_dense(SweepPairing::symmetric), 1e-10);
}

TEST(Cycle, SymmetricPairingIsSelfAdjointPreconditioner) {
  const auto p = make_case("s-iso");
  const auto op = benchmark_operator(p, SweepPairing::symmetric);
  EXPECT_LE(checks::preconditioner_asymmetry(op, 5), 1e-10);
  EXPECT_TRUE(checks::coarse_matrix_spd(op));
  // the repeated pairing is not symmetric, which is why PCG refuses it
  EXPECT_GT(checks::preconditioner_asymmetry(op.with_pairing(SweepPairing::repeated), 5), 1e-6);
}

TEST(Cycle, CoarseCorrectionIsAnEnergyProjection) {
  const auto g = checks::small_two_grid();
  const Eigen::MatrixXd a = g.problem.matrix.to_dense();
  const TwoGridOperator op(g.problem.matrix, g.coarsening.interpolation.p, g.coloring);
  Rng rng(9);
  for (int t = 0; t < 20; ++t) {
    Vector e(16);
    for (auto& v : e) v = rng.normal();
    const double before = energy(g.problem.matrix, e);
    op.coarse_correct(Vector(16, 0.0), e);
    const double after = energy(g.problem.matrix, e);
    EXPECT_LE(after, before * (1.0 + 1e-12));
    // the corrected error is A-orthogonal to range(P)
    const Eigen::VectorXd pe = g.coarsening.interpolation.p.to_dense().transpose() * a *
                               Eigen::Map<const Eigen::VectorXd>(e.data(), 16);
    EXPECT_LE(pe.cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(Cycle, SymmetricPropagatorSpectrumInUnitInterval) {
  for (index_t m : {4u, 6u, 8u}) {
    const auto p = generate_fd_square(m, {1.0, 1.0, 0.0});
    CoarsenOptions o;
    o.target_coarse = m * m / 4;
    const auto r = coarsen(DistanceOracle::graph(p.matrix), ParametricModel{ModelFamily::spherical, 1.0, 4.0}, o);
    const TwoGridOperator op(p.matrix, r.interpolation.p, greedy_coloring(p.matrix));
    const Eigen::MatrixXd e = checks::cycle_matrix(op);
    // E is A-self-adjoint, so A^{1/2} E A^{-1/2} is symmetric with real spectrum
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> sa(p.matrix.to_dense());
    const Eigen::MatrixXd half = sa.operatorSqrt(), inv_half = sa.operatorInverseSqrt();
    Eigen::MatrixXd s = half * e * inv_half;
    s = 0.5 * (s + s.transpose()).eval();
    const Eigen::VectorXd ev = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(s).eigenvalues();
    EXPECT_GE(ev.minCoeff(), -1e-10);
    EXPECT_LT(ev.maxCoeff(), 1.0);
  }
}

TEST(Rate, ScaleInvariant) {
  const auto p = generate_fd_square(15, {1.0, 1.0, 0.0});
  CoarsenOptions o;
  o.target_coarse = 56;
  const auto r = coarsen(DistanceOracle::graph(p.matrix), ParametricModel{ModelFamily::exponential, 1.0, 3.0}, o);
  const auto c = greedy_coloring(p.matrix);
  for (auto pairing : {SweepPairing::repeated, SweepPairing::symmetric}) {
    const TwoGridOperator a(p.matrix, r.interpolation.p, c, pairing);
    const TwoGridOperator b(p.matrix.scaled(7.5), r.interpolation.p, c, pairing);
    const auto ra = estimate_asymptotic_rate(a, 4, 60, 0.0, 60);
    const auto rb = estimate_asymptotic_rate(b, 4, 60, 0.0, 60);
    EXPECT_NEAR(ra.rho, rb.rho, 1e-10);
    EXPECT_NEAR(ra.rho_l2, rb.rho_l2, 1e-10);
  }
}

TEST(Rate, ReproducibleAcrossSeeds) {
  const auto p = make_case("s-iso");
  const auto op = benchmark_operator(p, SweepPairing::repeated);
  const auto a = estimate_asymptotic_rate(op, 1);
  const auto b = estimate_asymptotic_rate(op, 99);
  EXPECT_TRUE(a.stalled);
  EXPECT_TRUE(b.stalled);
  EXPECT_NEAR(a.rho, b.rho, 1e-3);
  EXPECT_FALSE(a.diverged);
  EXPECT_THROW(estimate_asymptotic_rate(op, 1, 5), InputError);
  EXPECT_THROW(estimate_asymptotic_rate(op, 1, 50, 1e-3, 60), InputError);
}

TEST(Rate, ExponentialModelBenchmarkBand) {
  const auto p = make_case("s-iso");
  EXPECT_LE(estimate_asymptotic_rate(benchmark_operator(p, SweepPairing::repeated), 1).rho, 0.35);
}

TEST(Pcg, IdentityMatrixOneIteration) {
  const auto a = SparseMatrix::identity(10);
  Rng rng(1);
  Vector b(10);
  for (auto& v : b) v = rng.normal();
  const auto rep = cg_solve(a, b);
  EXPECT_TRUE(rep.converged);
  EXPECT_EQ(rep.iterations, 1u);
  const TwoGridOperator op(a, SparseMatrix::identity(10));
  EXPECT_EQ(pcg_solve(op, b).iterations, 1u);
}

TEST(Pcg, TwoGridBeatsPlainConjugateGradients) {
  const auto p = make_case("s-iso");
  const auto op = benchmark_operator(p, SweepPairing::symmetric);
  Rng rng(4);
  Vector b(p.size());
  for (auto& v : b) v = rng.normal();
  Vector x;
  const auto pre = pcg_solve(op, b, 1e-8, 1000, &x);
  const auto plain = cg_solve(p.matrix, b);
  EXPECT_TRUE(pre.converged);
  EXPECT_TRUE(plain.converged);
  EXPECT_LT(pre.iterations, plain.iterations);
  EXPECT_LE(pre.iterations, 12u);
  EXPECT_LE(pre.residual_history.back(), 1e-8 * pre.residual_history.front());
  for (double r : pre.residual_history) EXPECT_GT(r, 0.0);
  Vector r = p.matrix * std::span<const double>(x);
  for (index_t i = 0; i < r.size(); ++i) r[i] -= b[i];
  EXPECT_LE(norm2(r), 1e-8 * norm2(b) * 1.0001);
}

TEST(Pcg, GuardsAndReports) {
  const auto p = generate_fd_square(6, {1.0, 1.0, 0.0});
  const TwoGridOperator sym(p.matrix, SparseMatrix::identity(36));
  Vector bad(36, 0.0);
  bad[3] = std::nan("");
  EXPECT_THROW(pcg_solve(sym, bad), InputError);
  EXPECT_THROW(pcg_solve(sym.with_pairing(SweepPairing::repeated), Vector(36, 1.0)), InputError);
  // zero right-hand side is already solved
  EXPECT_EQ(pcg_solve(sym, Vector(36, 0.0)).iterations, 0u);
  // an indefinite preconditioner is detected, not silently used
  const Preconditioner neg = [](std::span<const double> r, std::span<double> z) {
    for (std::size_t i = 0; i < r.size(); ++i) z[i] = -r[i];
  };
  const auto rep = pcg(p.matrix, Vector(36, 1.0), neg);
  EXPECT_TRUE(rep.indefinite_preconditioner);
  EXPECT_FALSE(rep.converged);
  // iteration cap
  const auto capped = cg_solve(p.matrix, Vector(36, 1.0), 1e-12, 2);
  EXPECT_FALSE(capped.converged);
  EXPECT_EQ(capped.iterations, 2u);
}
