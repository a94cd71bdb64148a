#include <gtest/gtest.h>

#include "krigamg/problem.hpp"
#include "krigamg/smoother.hpp"
#include "oracles.hpp"

using namespace krigamg;

namespace {

double rayleigh(const SparseMatrix& a, const Vector& v) { return energy(a, v) / dot(v, v); }

}  // namespace

TEST(Coloring, RedBlackOnGrid) {
  const auto p = generate_fd_square(3, {1.0, 1.0, 0.0});
  const auto c = greedy_coloring(p.matrix);
  EXPECT_EQ(c.num_colors, 2u);
  EXPECT_TRUE(c.valid_for(p.matrix));
  for (index_t i = 0; i < 9; ++i) EXPECT_EQ(c.color_of[i], ((i % 3) + (i / 3)) % 2);
}

TEST(Coloring, DiagonalMatrixNeedsOneColor) {
  const auto c = greedy_coloring(SparseMatrix::identity(6));
  EXPECT_EQ(c.num_colors, 1u);
  EXPECT_EQ(c.members[0].size(), 6u);
}

TEST(Coloring, FemMatrixPassesEdgeScan) {
  const auto p = make_case("c-iso");
  const auto c = greedy_coloring(p.matrix);
  index_t max_degree = 0;
  for (index_t r = 0; r < p.size(); ++r) {
    max_degree = std::max<index_t>(max_degree, p.matrix.row_cols(r).size() - 1);
    for (index_t j : p.matrix.row_cols(r))
      if (j != r) {
        ASSERT_NE(c.color_of[r], c.color_of[j]);
      }
  }
  EXPECT_LE(c.num_colors, max_degree + 1);
  index_t members = 0;
  for (const auto& m : c.members) members += m.size();
  EXPECT_EQ(members, p.size());
}

TEST(GaussSeidel, DiagonalSystemSolvedInOneSweep) {
  const auto a = SparseMatrix::from_triplets(3, 3, {{0, 0, 2.0}, {1, 1, 4.0}, {2, 2, 0.5}});
  const Vector b{1.0, 2.0, 3.0};
  const Vector x = colored_gauss_seidel_sweep(a, greedy_coloring(a), Vector{7.0, -1.0, 0.3}, b, false);
  EXPECT_EQ(x, (Vector{0.5, 0.5, 6.0}));
}

TEST(GaussSeidel, TwoByTwoHandEvaluation) {
  const auto a = SparseMatrix::from_triplets(2, 2, {{0, 0, 2.0}, {0, 1, -1.0}, {1, 0, -1.0}, {1, 1, 2.0}});
  const auto c = greedy_coloring(a);
  ASSERT_EQ(c.num_colors, 2u);
  EXPECT_EQ(c.color_of, (std::vector<index_t>{0, 1}));
  const Vector x = colored_gauss_seidel_sweep(a, c, Vector{1.0, 1.0}, Vector{0.0, 0.0}, false);
  EXPECT_DOUBLE_EQ(x[0], 0.5);
  EXPECT_DOUBLE_EQ(x[1], 0.25);
}

TEST(GaussSeidel, SweepMatchesDenseIterationMatrix) {
  for (bool reverse : {false, true}) {
    const auto sub = generate_fd_square(4, {1.0, 1e-2, 0.0});
    const auto& a = sub.matrix;
    const auto c = greedy_coloring(a);
    const Eigen::MatrixXd s = oracle::colored_gs_matrix(a.to_dense(), c.color_of, c.num_colors, reverse);
    for (index_t j = 0; j < 16; ++j) {
      Vector e(16, 0.0);
      e[j] = 1.0;
      const Vector out = colored_gauss_seidel_sweep(a, c, e, Vector(16, 0.0), reverse);
      for (index_t i = 0; i < 16; ++i) EXPECT_NEAR(out[i], s(i, j), 1e-14);
    }
  }
}

TEST(GaussSeidel, ForwardThenReverseIsASelfAdjoint) {
  const auto p = generate_fd_square(4, {1.0, 1.0, 0.0});
  const Eigen::MatrixXd a = p.matrix.to_dense();
  const auto c = greedy_coloring(p.matrix);
  Eigen::MatrixXd s(16, 16);
  for (index_t j = 0; j < 16; ++j) {
    Vector e(16, 0.0);
    e[j] = 1.0;
    e = colored_gauss_seidel_sweep(p.matrix, c, e, Vector(16, 0.0), false);
    e = colored_gauss_seidel_sweep(p.matrix, c, e, Vector(16, 0.0), true);
    for (index_t i = 0; i < 16; ++i) s(i, j) = e[i];
  }
  EXPECT_LE((a * s - s.transpose() * a).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(GaussSeidel, RedBlackEqualsLexicographicWithinColor) {
  // Within one color of a red-black grid no two unknowns couple, so a
  // plain lexicographic Gauss-Seidel pass over the reds, then the blacks,
  // must agree with the colored sweep.
  const index_t m = 5;
  const auto p = generate_fd_square(m, {1.0, 1.0, 0.0});
  const Eigen::MatrixXd a = p.matrix.to_dense();
  const auto c = greedy_coloring(p.matrix);
  Rng rng(11);
  Vector x(m * m), b(m * m);
  for (auto& v : x) v = rng.normal();
  for (auto& v : b) v = rng.normal();
  Vector ref = x;
  for (index_t color = 0; color < 2; ++color)
    for (index_t i = 0; i < m * m; ++i) {
      if ((i % m + i / m) % 2 != color) continue;
      double s = b[i];
      for (index_t j = 0; j < m * m; ++j)
        if (j != i) s -= a(i, j) * ref[j];
      ref[i] = s / a(i, i);
    }
  const Vector out = colored_gauss_seidel_sweep(p.matrix, c, x, b, false);
  for (index_t i = 0; i < m * m; ++i) EXPECT_NEAR(out[i], ref[i], 1e-12);
}

TEST(GaussSeidel, EnergyNeverIncreases) {
  for (const char* name : {"s-aniso", "c-iso"}) {
    const auto p = make_case(name);
    const auto c = greedy_coloring(p.matrix);
    Rng rng(5);
    Vector x(p.size());
    for (auto& v : x) v = rng.normal();
    const Vector zero(p.size(), 0.0);
    double prev = energy(p.matrix, x);
    for (int s = 0; s < 10; ++s) {
      colored_gauss_seidel_inplace(p.matrix, c, x, zero, s % 2 == 1);
      const double now = energy(p.matrix, x);
      EXPECT_LE(now, prev * (1.0 + 1e-14));
      prev = now;
    }
  }
}

TEST(GaussSeidel, RejectsZeroDiagonal) {
  const auto a = SparseMatrix::from_triplets(2, 2, {{0, 0, 1.0}, {0, 1, 1.0}, {1, 0, 1.0}});
  EXPECT_THROW(require_nonzero_diagonal(a), NumericalError);
}

TEST(TestVectors, UnsmoothedColumnsAreStandardNormal) {
  const auto p = make_case("s-iso");
  const auto v = generate_test_vectors(p.matrix, 3, 0, 42);
  for (index_t k = 0; k < 3; ++k) {
    const Vector col = v.column(k);
    double mean = 0.0, var = 0.0;
    for (double x : col) mean += x;
    mean /= static_cast<double>(col.size());
    for (double x : col) var += (x - mean) * (x - mean);
    var /= static_cast<double>(col.size() - 1);
    EXPECT_GE(var, 0.8);
    EXPECT_LE(var, 1.2);
  }
}

TEST(TestVectors, SmoothingLowersRayleighQuotient) {
  const auto p = make_case("s-iso");
  const auto raw = generate_test_vectors(p.matrix, 4, 0, 9);
  const auto smooth = generate_test_vectors(p.matrix, 4, 1, 9);
  for (index_t k = 0; k < 4; ++k) EXPECT_LT(rayleigh(p.matrix, smooth.column(k)), rayleigh(p.matrix, raw.column(k)));
}

TEST(TestVectors, SameSeedBitIdenticalOtherSeedDiffers) {
  const auto p = make_case("c-iso");
  const auto a = generate_test_vectors(p.matrix, 5, 1, 77);
  const auto b = generate_test_vectors(p.matrix, 5, 1, 77);
  const auto c = generate_test_vectors(p.matrix, 5, 1, 78);
  EXPECT_EQ(a.data, b.data);
  EXPECT_NE(a.data, c.data);
  // column k does not depend on how many columns were requested
  const auto d = generate_test_vectors(p.matrix, 2, 1, 77);
  EXPECT_EQ(d.column(1), a.column(1));
}

TEST(TestVectors, RejectsEmptySet) {
  const auto p = generate_fd_square(3, {1.0, 1.0, 0.0});
  EXPECT_THROW(generate_test_vectors(p.matrix, 0, 1, 1), InputError);
}
