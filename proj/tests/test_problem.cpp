#include <filesystem>
#include <fstream>
#include <map>

#include <gtest/gtest.h>

#include "krigamg/errors.hpp"
#include "krigamg/matrix_market.hpp"
#include "krigamg/problem.hpp"
#include "oracles.hpp"

using namespace krigamg;

namespace {

std::filesystem::path scratch(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / "krigamg_tests";
  std::filesystem::create_directories(dir);
  return dir / name;
}

bool cholesky_succeeds(const SparseMatrix& a) {
  Eigen::LLT<Eigen::MatrixXd> llt(a.to_dense());
  return llt.info() == Eigen::Success;
}

}  // namespace

TEST(SparseMatrix, TripletsSumDuplicatesAndDropZeros) {
  const auto a = SparseMatrix::from_triplets(2, 2, {{0, 0, 1.0}, {0, 0, 2.0}, {1, 0, 0.0}, {1, 1, 5.0}});
  EXPECT_EQ(a.nnz(), 2u);
  EXPECT_EQ(a.at(0, 0), 3.0);
  EXPECT_FALSE(a.has_entry(1, 0));
}

TEST(SparseMatrix, ProductsMatchDense) {
  Rng rng(3);
  Eigen::MatrixXd d = Eigen::MatrixXd::Zero(7, 5);
  for (int k = 0; k < 15; ++k) d(rng.below(7), rng.below(5)) = rng.normal();
  const auto a = SparseMatrix::from_dense(d);
  Vector x(5), y(7);
  for (auto& v : x) v = rng.normal();
  for (auto& v : y) v = rng.normal();
  const Vector ax = a * std::span<const double>(x);
  const Vector aty = a.multiply_transpose(y);
  const Eigen::VectorXd ax_ref = d * Eigen::Map<Eigen::VectorXd>(x.data(), 5);
  const Eigen::VectorXd aty_ref = d.transpose() * Eigen::Map<Eigen::VectorXd>(y.data(), 7);
  for (int i = 0; i < 7; ++i) EXPECT_NEAR(ax[i], ax_ref(i), 1e-14);
  for (int i = 0; i < 5; ++i) EXPECT_NEAR(aty[i], aty_ref(i), 1e-14);
  EXPECT_TRUE((a.transpose().to_dense() - d.transpose()).isZero(0.0));
}

TEST(SparseMatrix, SystemMatrixChecks) {
  EXPECT_THROW(require_system_matrix(SparseMatrix::from_triplets(2, 3, {{0, 0, 1.0}})), InputError);
  EXPECT_THROW(require_system_matrix(SparseMatrix::from_triplets(2, 2, {{0, 0, 1.0}, {1, 0, 1.0}, {1, 1, 1.0}})),
               InputError);
  EXPECT_THROW(require_system_matrix(SparseMatrix::from_triplets(2, 2, {{0, 0, 1.0}})), InputError);
  EXPECT_NO_THROW(require_system_matrix(SparseMatrix::identity(3)));
}

TEST(FdSquare, IsotropicBenchmarkStencil) {
  const auto p = generate_fd_square(45, {1.0, 1.0, 0.0});
  ASSERT_EQ(p.size(), 2025u);
  ASSERT_TRUE(p.coords.has_value());
  EXPECT_EQ(p.coords->size(), 2025u);
  // interior-interior point: (ix, iy) = (10, 20)
  const index_t i = 20 * 45 + 10;
  const auto cols = p.matrix.row_cols(i);
  ASSERT_EQ(cols.size(), 5u);
  EXPECT_EQ(p.matrix.at(i, i), 4.0);
  for (index_t j : {i - 1, i + 1, i - 45, i + 45}) EXPECT_EQ(p.matrix.at(i, j), -1.0);
}

TEST(FdSquare, SmallestLaplacian) {
  const auto p = generate_fd_square(2, {1.0, 1.0, 0.0});
  Eigen::MatrixXd expected(4, 4);
  expected << 4, -1, -1, 0, -1, 4, 0, -1, -1, 0, 4, -1, 0, -1, -1, 4;
  EXPECT_TRUE((p.matrix.to_dense() - expected).isZero(0.0));
}

TEST(FdSquare, AnisotropicRowSumsMatchStencilEnumeration) {
  const index_t m = 45;
  const double c2 = 1e-2;
  const auto p = generate_fd_square(m, {1.0, c2, 0.0});
  // Independent enumeration of the five taps of each grid point.
  std::vector<Triplet> t;
  for (index_t y = 0; y < m; ++y)
    for (index_t x = 0; x < m; ++x) {
      const index_t i = y * m + x;
      t.push_back({i, i, 2.0 + 2.0 * c2});
      if (x > 0) t.push_back({i, i - 1, -1.0});
      if (x + 1 < m) t.push_back({i, i + 1, -1.0});
      if (y > 0) t.push_back({i, i - m, -c2});
      if (y + 1 < m) t.push_back({i, i + m, -c2});
    }
  const auto ref = SparseMatrix::from_triplets(m * m, m * m, std::move(t));
  EXPECT_TRUE((p.matrix.to_dense() - ref.to_dense()).isZero(0.0));
  for (index_t y = 1; y + 1 < m; ++y)
    for (index_t x = 1; x + 1 < m; ++x) {
      double s = 0.0;
      for (double v : p.matrix.row_values(y * m + x)) s += v;
      EXPECT_NEAR(s, 0.0, 1e-12);
    }
}

TEST(FdSquare, MMatrixAndSpd) {
  for (double c2 : {1.0, 1e-2}) {
    const auto p = generate_fd_square(12, {1.0, c2, 0.0});
    for (index_t r = 0; r < p.size(); ++r) {
      const auto cols = p.matrix.row_cols(r);
      for (std::size_t k = 0; k < cols.size(); ++k) {
        if (cols[k] == r)
          EXPECT_GT(p.matrix.row_values(r)[k], 0.0);
        else
          EXPECT_LE(p.matrix.row_values(r)[k], 0.0);
      }
    }
    EXPECT_TRUE(cholesky_succeeds(p.matrix));
  }
}

TEST(FdSquare, MixedDerivativeStaysSpdAndSymmetric) {
  const auto p = generate_fd_square(10, {1.0, 1.0, 0.4});
  EXPECT_TRUE(p.matrix.check_symmetric(1e-12));
  EXPECT_TRUE(cholesky_succeeds(p.matrix));
  EXPECT_EQ(p.matrix.row_cols(5 * 10 + 5).size(), 9u);
}

TEST(FdSquare, RejectsIndefiniteCoefficients) {
  EXPECT_THROW(generate_fd_square(5, {1.0, 1.0, 1.5}), InputError);
  EXPECT_THROW(generate_fd_square(5, {-1.0, 1.0, 0.0}), InputError);
  EXPECT_THROW(generate_fem_circle(5, {1.0, 0.0, 0.0}), InputError);
}

TEST(FemCircle, BenchmarkSizeSymmetricPositiveDefinite) {
  for (const char* name : {"c-iso", "c-aniso"}) {
    const auto p = make_case(name);
    EXPECT_GE(p.size(), 2400u);
    EXPECT_LE(p.size(), 2700u);
    EXPECT_TRUE(p.matrix.check_symmetric(1e-12));
    EXPECT_TRUE(cholesky_succeeds(p.matrix));
    for (index_t r = 0; r < p.size(); ++r) EXPECT_GT(p.matrix.at(r, r), 0.0);
  }
}

TEST(FemCircle, SingleInteriorNodeMatchesElementOracle) {
  const DiffusionCoefficients iso{1.0, 1.0, 0.0};
  const auto mesh = polar_disc_mesh(2);
  const auto p = generate_fem_circle(2, iso);
  ASSERT_EQ(p.size(), 1u);
  double expected = 0.0;
  for (const auto& tri : mesh.triangles)
    for (int a = 0; a < 3; ++a)
      if (tri[a] == 0) {
        const auto k = oracle::p1_stiffness(mesh.nodes[tri[0]], mesh.nodes[tri[1]], mesh.nodes[tri[2]], iso);
        expected += k(a, a);
      }
  EXPECT_NEAR(p.matrix.at(0, 0), expected, 1e-12);
}

TEST(FemCircle, AssemblyMatchesElementOracleOnSmallMesh) {
  const DiffusionCoefficients k{1.0, 1e-2, 0.0};
  const index_t rings = 5;
  const auto mesh = polar_disc_mesh(rings);
  const auto p = generate_fem_circle(rings, k);
  std::map<index_t, index_t> unknown;
  for (index_t v = 0; v < mesh.nodes.size(); ++v)
    if (!mesh.on_boundary[v]) unknown.emplace(v, unknown.size());
  ASSERT_EQ(unknown.size(), p.size());
  Eigen::MatrixXd dense = Eigen::MatrixXd::Zero(p.size(), p.size());
  for (const auto& tri : mesh.triangles) {
    const auto ke = oracle::p1_stiffness(mesh.nodes[tri[0]], mesh.nodes[tri[1]], mesh.nodes[tri[2]], k);
    for (int a = 0; a < 3; ++a)
      for (int b = 0; b < 3; ++b)
        if (unknown.count(tri[a]) && unknown.count(tri[b])) dense(unknown[tri[a]], unknown[tri[b]]) += ke(a, b);
  }
  EXPECT_LE((p.matrix.to_dense() - dense).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(FemCircle, MeshIsDeterministicAndPositivelyOriented) {
  const auto a = polar_disc_mesh(8);
  const auto b = polar_disc_mesh(8);
  EXPECT_EQ(a.triangles, b.triangles);
  for (const auto& t : a.triangles) EXPECT_NE(signed_area2(a.nodes[t[0]], a.nodes[t[1]], a.nodes[t[2]]), 0.0);
  // total area approaches that of the inscribed polygon
  double area = 0.0;
  for (const auto& t : a.triangles) area += 0.5 * std::abs(signed_area2(a.nodes[t[0]], a.nodes[t[1]], a.nodes[t[2]]));
  const double sides = 6.0 * 7.0;
  EXPECT_NEAR(area, 0.5 * sides * std::sin(2.0 * std::numbers::pi / sides), 1e-12);
}

TEST(Cases, GenerationIsDeterministic) {
  for (const char* name : {"s-iso", "s-aniso", "c-iso"}) {
    const auto a = make_case(name);
    const auto b = make_case(name);
    ASSERT_EQ(a.size(), b.size());
    for (index_t r = 0; r < a.size(); ++r) {
      ASSERT_TRUE(std::ranges::equal(a.matrix.row_cols(r), b.matrix.row_cols(r)));
      ASSERT_TRUE(std::ranges::equal(a.matrix.row_values(r), b.matrix.row_values(r)));
    }
  }
  EXPECT_THROW(make_case("s-isotropic"), InputError);
}

TEST(MatrixMarket, IdentityFile) {
  const auto path = scratch("eye.mtx");
  std::ofstream(path) << "%%MatrixMarket matrix coordinate real general\n% comment\n2 2 2\n1 1 1.0\n2 2 1.0\n";
  const auto p = load_matrix_market(path);
  ASSERT_EQ(p.size(), 2u);
  EXPECT_EQ(p.matrix.at(0, 0), 1.0);
  EXPECT_EQ(p.matrix.at(1, 1), 1.0);
  EXPECT_FALSE(p.coords.has_value());
}

TEST(MatrixMarket, SymmetricStorageIsExpanded) {
  const auto path = scratch("sym.mtx");
  std::ofstream(path) << "%%MatrixMarket matrix coordinate real symmetric\n2 2 3\n1 1 2\n2 1 -1\n2 2 2\n";
  const auto a = read_matrix_market(path);
  EXPECT_EQ(a.at(0, 1), -1.0);
  EXPECT_EQ(a.at(1, 0), -1.0);
}

TEST(MatrixMarket, RoundTripIsBitIdentical) {
  const auto p = generate_fd_square(3, {1.0, 1.0, 0.0});
  const auto q = generate_fem_circle(4, {1.0, 1e-2, 0.0});
  for (const auto* prob : {&p, &q}) {
    const auto path = scratch("rt.mtx");
    const auto cpath = scratch("rt.coords");
    save_matrix_market(prob->matrix, path);
    write_coordinates(*prob->coords, cpath);
    const auto back = load_matrix_market(path, cpath);
    ASSERT_EQ(back.size(), prob->size());
    for (index_t r = 0; r < back.size(); ++r) {
      ASSERT_TRUE(std::ranges::equal(back.matrix.row_cols(r), prob->matrix.row_cols(r)));
      ASSERT_TRUE(std::ranges::equal(back.matrix.row_values(r), prob->matrix.row_values(r)));
    }
    EXPECT_EQ(*back.coords, *prob->coords);
  }
}

TEST(MatrixMarket, ErrorPaths) {
  const auto p = generate_fd_square(3, {1.0, 1.0, 0.0});
  const auto path = scratch("err.mtx");
  save_matrix_market(p.matrix, path);
  const auto cpath = scratch("short.coords");
  {
    std::ofstream out(cpath);
    for (int k = 0; k < 8; ++k) out << k << " 0\n";
  }
  EXPECT_THROW(load_matrix_market(path, cpath), InputError);
  EXPECT_THROW(load_matrix_market(scratch("missing.mtx")), InputError);
  const auto bad = scratch("bad.mtx");
  std::ofstream(bad) << "%%MatrixMarket matrix array real general\n2 2\n1\n0\n0\n1\n";
  EXPECT_THROW(read_matrix_market(bad), InputError);
  const auto trunc = scratch("trunc.mtx");
  std::ofstream(trunc) << "%%MatrixMarket matrix coordinate real general\n2 2 3\n1 1 1\n2 2 1\n";
  EXPECT_THROW(read_matrix_market(trunc), InputError);
}
