#pragma once

#include <array>
#include <cmath>
#include <numbers>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "krigamg/errors.hpp"
#include "krigamg/sparse.hpp"

namespace krigamg {

using Point = std::array<double, 2>;

// Coefficients of -(c1 d_xx + c2 d_yy + 2 c3 d_xy).
struct DiffusionCoefficients {
  double c1 = 1.0;
  double c2 = 1.0;
  double c3 = 0.0;

  bool positive_definite() const { return c1 > 0.0 && c1 * c2 - c3 * c3 > 0.0; }
};

struct ProblemInstance {
  SparseMatrix matrix;
  std::optional<std::vector<Point>> coords;
  std::string label;

  index_t size() const { return matrix.rows(); }
};

inline void require_positive_definite(const DiffusionCoefficients& c) {
  if (!c.positive_definite())
    throw InputError("coefficient matrix [[c1,c3],[c3,c2]] is not positive definite");
}

// Nine-point finite differences on the m x m interior grid of (0,1)^2 with
// homogeneous Dirichlet boundary, scaled by h^2. Unknown (ix, iy) has index
// iy * m + ix, so x runs fastest and a grid row shares iy.
inline ProblemInstance generate_fd_square(index_t m, const DiffusionCoefficients& coeffs,
                                          std::string label = "square") {
  if (m < 2) throw InputError("grid side must be at least 2");
  require_positive_definite(coeffs);
  const double h = 1.0 / static_cast<double>(m + 1);
  const auto& [c1, c2, c3] = coeffs;
  struct Tap {
    int dx, dy;
    double w;
  };
  const std::array<Tap, 9> stencil{{
      {0, 0, 2.0 * c1 + 2.0 * c2},
      {-1, 0, -c1},
      {1, 0, -c1},
      {0, -1, -c2},
      {0, 1, -c2},
      {1, 1, -0.5 * c3},
      {-1, -1, -0.5 * c3},
      {1, -1, 0.5 * c3},
      {-1, 1, 0.5 * c3},
  }};

  std::vector<Triplet> t;
  t.reserve(m * m * 9);
  std::vector<Point> coords;
  coords.reserve(m * m);
  const auto side = static_cast<int>(m);
  for (int iy = 0; iy < side; ++iy) {
    for (int ix = 0; ix < side; ++ix) {
      const auto row = static_cast<index_t>(iy * side + ix);
      coords.push_back({(ix + 1) * h, (iy + 1) * h});
      for (const auto& tap : stencil) {
        const int jx = ix + tap.dx;
        const int jy = iy + tap.dy;
        if (jx < 0 || jy < 0 || jx >= side || jy >= side || tap.w == 0.0) continue;
        t.push_back({row, static_cast<index_t>(jy * side + jx), tap.w});
      }
    }
  }
  return {SparseMatrix::from_triplets(m * m, m * m, std::move(t)), std::move(coords),
          std::move(label)};
}

struct TriangleMesh {
  std::vector<Point> nodes;
  std::vector<std::array<index_t, 3>> triangles;
  std::vector<bool> on_boundary;
};

// Structured polar triangulation of the unit disc. Node levels run from the
// centre (level 0) to the boundary circle (level rings - 1); level r > 0
// carries 6r equally spaced nodes. Neighbouring levels are stitched by
// advancing along whichever ring has the smaller next angle.
inline TriangleMesh polar_disc_mesh(index_t rings) {
  if (rings < 2) throw InputError("disc mesh needs at least 2 node levels");
  const index_t outer = rings - 1;
  TriangleMesh mesh;
  mesh.nodes.push_back({0.0, 0.0});
  mesh.on_boundary.push_back(false);
  std::vector<index_t> ring_start{0};
  for (index_t r = 1; r <= outer; ++r) {
    ring_start.push_back(mesh.nodes.size());
    const index_t count = 6 * r;
    const double radius = static_cast<double>(r) / static_cast<double>(outer);
    for (index_t k = 0; k < count; ++k) {
      const double angle = 2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(count);
      mesh.nodes.push_back({radius * std::cos(angle), radius * std::sin(angle)});
      mesh.on_boundary.push_back(r == outer);
    }
  }

  for (index_t k = 0; k < 6; ++k)
    mesh.triangles.push_back({0, ring_start[1] + k, ring_start[1] + (k + 1) % 6});

  for (index_t r = 1; r < outer; ++r) {
    const index_t n_in = 6 * r;
    const index_t n_out = 6 * (r + 1);
    const auto in = [&](index_t k) { return ring_start[r] + k % n_in; };
    const auto out = [&](index_t k) { return ring_start[r + 1] + k % n_out; };
    index_t i = 0;
    index_t j = 0;
    while (i < n_in || j < n_out) {
      // Compare next angles i+1 / n_in and j+1 / n_out exactly in integers.
      const bool advance_inner =
          j == n_out || (i < n_in && (i + 1) * n_out <= (j + 1) * n_in);
      if (advance_inner) {
        mesh.triangles.push_back({in(i), in(i + 1), out(j)});
        ++i;
      } else {
        mesh.triangles.push_back({in(i), out(j + 1), out(j)});
        ++j;
      }
    }
  }
  return mesh;
}

// Twice the signed area.
inline double signed_area2(const Point& a, const Point& b, const Point& c) {
  return (b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]);
}

// Local P1 stiffness matrix of one triangle for the coefficient tensor.
inline std::array<std::array<double, 3>, 3> p1_element_stiffness(
    const std::array<Point, 3>& v, const DiffusionCoefficients& coeffs) {
  const double area2 = signed_area2(v[0], v[1], v[2]);
  if (std::abs(area2) * 0.5 < 1e-14) throw InputError("degenerate triangle in mesh");
  std::array<std::array<double, 2>, 3> grad{};
  for (int a = 0; a < 3; ++a) {
    const Point& p = v[(a + 1) % 3];
    const Point& q = v[(a + 2) % 3];
    grad[a] = {(p[1] - q[1]) / area2, (q[0] - p[0]) / area2};
  }
  const double area = std::abs(area2) * 0.5;
  std::array<std::array<double, 3>, 3> k{};
  for (int a = 0; a < 3; ++a)
    for (int b = 0; b < 3; ++b) {
      const double kx = coeffs.c1 * grad[b][0] + coeffs.c3 * grad[b][1];
      const double ky = coeffs.c3 * grad[b][0] + coeffs.c2 * grad[b][1];
      k[a][b] = area * (grad[a][0] * kx + grad[a][1] * ky);
    }
  return k;
}

// P1 stiffness matrix on the polar disc mesh with Dirichlet nodes eliminated.
// Interior unknowns keep the mesh order (centre first, rings outward).
inline ProblemInstance generate_fem_circle(index_t rings, const DiffusionCoefficients& coeffs,
                                           std::string label = "circle") {
  require_positive_definite(coeffs);
  const TriangleMesh mesh = polar_disc_mesh(rings);
  constexpr auto kNone = static_cast<index_t>(-1);
  std::vector<index_t> unknown(mesh.nodes.size(), kNone);
  std::vector<Point> coords;
  for (index_t v = 0; v < mesh.nodes.size(); ++v) {
    if (mesh.on_boundary[v]) continue;
    unknown[v] = coords.size();
    coords.push_back(mesh.nodes[v]);
  }
  std::vector<Triplet> t;
  t.reserve(mesh.triangles.size() * 9);
  for (const auto& tri : mesh.triangles) {
    const auto k = p1_element_stiffness({mesh.nodes[tri[0]], mesh.nodes[tri[1]], mesh.nodes[tri[2]]},
                                        coeffs);
    for (int a = 0; a < 3; ++a) {
      if (unknown[tri[a]] == kNone) continue;
      for (int b = 0; b < 3; ++b) {
        if (unknown[tri[b]] == kNone) continue;
        t.push_back({unknown[tri[a]], unknown[tri[b]], k[a][b]});
      }
    }
  }
  const index_t n = coords.size();
  SparseMatrix a = SparseMatrix::from_triplets(n, n, std::move(t));
  // Element sums leave roundoff-level asymmetry and near-zero couplings on
  // right-angled edges; symmetrize and prune those.
  std::vector<Triplet> clean;
  const double drop = 1e-14 * a.max_abs();
  for (index_t r = 0; r < n; ++r) {
    const auto cols = a.row_cols(r);
    for (std::size_t q = 0; q < cols.size(); ++q) {
      const double v = 0.5 * (a.row_values(r)[q] + a.at(cols[q], r));
      if (std::abs(v) > drop) clean.push_back({r, cols[q], v});
    }
  }
  return {SparseMatrix::from_triplets(n, n, std::move(clean)), std::move(coords), std::move(label)};
}

// Node levels for the disc cases: 1 + 3 * 29 * 28 = 2437 interior unknowns.
inline constexpr index_t kDiscRings = 30;
inline constexpr index_t kSquareSide = 45;

// The four named benchmark cases: s-iso, s-aniso, c-iso, c-aniso.
inline ProblemInstance make_case(std::string_view name) {
  const DiffusionCoefficients iso{1.0, 1.0, 0.0};
  const DiffusionCoefficients aniso{1.0, 1e-2, 0.0};
  if (name == "s-iso") return generate_fd_square(kSquareSide, iso, "s-iso");
  if (name == "s-aniso") return generate_fd_square(kSquareSide, aniso, "s-aniso");
  if (name == "c-iso") return generate_fem_circle(kDiscRings, iso, "c-iso");
  if (name == "c-aniso") return generate_fem_circle(kDiscRings, aniso, "c-aniso");
  throw InputError("unknown case '" + std::string(name) +
                   "' (expected s-iso, s-aniso, c-iso or c-aniso)");
}

}  // namespace krigamg
