#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <map>
#include <memory>
#include <ostream>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "krigamg/errors.hpp"
#include "krigamg/metric.hpp"
#include "krigamg/random.hpp"
#include "krigamg/smoother.hpp"

namespace krigamg {

// ---------------------------------------------------------------------------
// Empirical covariance of test vectors
// ---------------------------------------------------------------------------

enum class MeanMode { zero, estimated };

// Per-variable mean across the K test vectors.
inline double test_vector_mean(const TestVectorSet& v, index_t i) {
  double s = 0.0;
  for (double x : v.row(i)) s += x;
  return s / static_cast<double>(v.count);
}

// (1/K) sum_k (v_i^k - m_i)(v_j^k - m_j), with m = 0 or the sample mean.
// Symmetric bit for bit: every product commutes and the summation order is
// the same for (i, j) and (j, i).
inline double empirical_cov_entry(const TestVectorSet& v, index_t i, index_t j, MeanMode mode) {
  if (i >= v.n || j >= v.n) throw InputError("covariance index out of range");
  const auto ri = v.row(i);
  const auto rj = v.row(j);
  const double mi = mode == MeanMode::estimated ? test_vector_mean(v, i) : 0.0;
  const double mj = mode == MeanMode::estimated ? test_vector_mean(v, j) : 0.0;
  double s = 0.0;
  for (index_t k = 0; k < v.count; ++k) s += (ri[k] - mi) * (rj[k] - mj);
  return s / static_cast<double>(v.count);
}

// Covariance estimated from test vectors, evaluated entry by entry. The
// vectors are shared so the source stays cheap to copy.
struct EmpiricalCovariance {
  std::shared_ptr<const TestVectorSet> vectors;
  MeanMode mean_mode = MeanMode::zero;
  // Relative regularization used when a local matrix fails to factor.
  double epsilon = 1e-8;

  double entry(index_t i, index_t j) const {
    return empirical_cov_entry(*vectors, i, j, mean_mode);
  }
};

// ---------------------------------------------------------------------------
// Parametric semivariogram models
// ---------------------------------------------------------------------------

enum class ModelFamily { exponential, spherical };

inline std::string_view family_name(ModelFamily f) {
  return f == ModelFamily::exponential ? "exp" : "sph";
}

struct ParametricModel {
  ModelFamily family = ModelFamily::exponential;
  double sigma2 = 1.0;  // sill
  double eta = 1.0;     // range

  double semivariogram(double h) const {
    h = std::abs(h);
    if (family == ModelFamily::exponential) return sigma2 * -std::expm1(-h / eta);
    if (h >= eta) return sigma2;
    const double r = h / eta;
    return sigma2 * (1.5 * r - 0.5 * r * r * r);
  }

  // C(h) = sigma^2 - gamma(h).
  double covariance(double h) const {
    h = std::abs(h);
    if (family == ModelFamily::exponential) return sigma2 * std::exp(-h / eta);
    if (h >= eta) return 0.0;
    const double r = h / eta;
    return sigma2 * (1.0 - 1.5 * r + 0.5 * r * r * r);
  }
};

inline double covariance_from_model(const ParametricModel& model, double d) {
  if (!(d >= 0.0)) throw InputError("distance must be non-negative");
  return model.covariance(d);
}

using CovarianceSource = std::variant<EmpiricalCovariance, ParametricModel>;

// ---------------------------------------------------------------------------
// Variogram cloud and empirical semivariogram
// ---------------------------------------------------------------------------

struct CloudPoint {
  double distance;
  double sq_diff;
};

inline constexpr index_t kExhaustive = std::numeric_limits<index_t>::max();

// (d(i,j), (v_i^l - v_j^l)^2) for unordered pairs i < j with
// d(i, j) <= max_distance and every test vector l. When there are more
// eligible pairs than `pair_budget`, a uniform subset of that size is drawn
// without replacement.
inline std::vector<CloudPoint> build_variogram_cloud(const TestVectorSet& v, const DistanceOracle& oracle,
                                                     double max_distance, index_t pair_budget = kExhaustive,
                                                     std::uint64_t seed = 0) {
  if (!(max_distance > 0.0)) throw InputError("max_distance must be positive");
  if (oracle.size() != v.n) throw InputError("distance oracle and test vectors differ in size");
  struct Pair {
    index_t i, j;
    double d;
  };
  std::vector<Pair> pairs;
  for (index_t i = 0; i < v.n; ++i)
    for (const auto& nb : oracle.within(i, max_distance))
      if (nb.index > i) pairs.push_back({i, nb.index, nb.distance});

  if (pair_budget < pairs.size()) {
    Rng rng(seed);
    for (index_t k = 0; k < pair_budget; ++k) {
      const index_t pick = k + static_cast<index_t>(rng.below(pairs.size() - k));
      std::swap(pairs[k], pairs[pick]);
    }
    pairs.resize(pair_budget);
    std::sort(pairs.begin(), pairs.end(),
              [](const Pair& a, const Pair& b) { return a.i < b.i || (a.i == b.i && a.j < b.j); });
  }

  std::vector<CloudPoint> cloud;
  cloud.reserve(pairs.size() * v.count);
  for (const auto& p : pairs) {
    const auto ri = v.row(p.i);
    const auto rj = v.row(p.j);
    for (index_t l = 0; l < v.count; ++l) {
      const double diff = ri[l] - rj[l];
      cloud.push_back({p.d, diff * diff});
    }
  }
  return cloud;
}

struct SemivariogramBin {
  double center = 0.0;         // (b + 1/2) * width
  double mean_distance = 0.0;  // average lag of the bin's cloud points
  index_t count = 0;
  double gamma = 0.0;
};

struct EmpiricalSemivariogram {
  double bin_width = 1.0;
  std::vector<SemivariogramBin> bins;  // nonempty bins, ascending lag
};

// Bin b collects lags in [b * width, (b + 1) * width); its estimate is half
// the mean squared difference.
inline EmpiricalSemivariogram bin_semivariogram(const std::vector<CloudPoint>& cloud, double width) {
  if (!(width > 0.0)) throw InputError("bin width must be positive");
  struct Acc {
    double sum_d = 0.0;
    double sum_sq = 0.0;
    index_t count = 0;
  };
  std::map<std::int64_t, Acc> acc;
  for (const auto& p : cloud) {
    auto& a = acc[static_cast<std::int64_t>(std::floor(p.distance / width))];
    a.sum_d += p.distance;
    a.sum_sq += p.sq_diff;
    ++a.count;
  }
  EmpiricalSemivariogram out;
  out.bin_width = width;
  for (const auto& [b, a] : acc) {
    const double c = static_cast<double>(a.count);
    out.bins.push_back({(static_cast<double>(b) + 0.5) * width, a.sum_d / c, a.count, a.sum_sq / (2.0 * c)});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Weighted least squares fit
// ---------------------------------------------------------------------------

struct FitResult {
  ParametricModel model;
  double residual = 0.0;
  bool converged = false;
  index_t iterations = 0;
};

// sum_b w_b (gamma_b - gamma_theta(h_b))^2 with w_b = count_b / h_b^2, h_b the
// mean lag of bin b. Bins at zero lag carry no weight.
inline double wls_residual(const EmpiricalSemivariogram& emp, const ParametricModel& m) {
  double r = 0.0;
  for (const auto& b : emp.bins) {
    if (!(b.mean_distance > 0.0)) continue;
    const double w = static_cast<double>(b.count) / (b.mean_distance * b.mean_distance);
    const double e = b.gamma - m.semivariogram(b.mean_distance);
    r += w * e * e;
  }
  return r;
}

namespace detail {

struct FitBounds {
  std::array<double, 2> lo;
  std::array<double, 2> hi;
};

// Parameters live in log space: x = (log sigma^2, log eta).
inline ParametricModel model_at(ModelFamily family, const std::array<double, 2>& x, const FitBounds& b) {
  return {family, std::exp(std::clamp(x[0], b.lo[0], b.hi[0])), std::exp(std::clamp(x[1], b.lo[1], b.hi[1]))};
}

}  // namespace detail

struct FitOptions {
  index_t grid_points = 31;
  index_t max_iterations = 4000;
};

// Coarse logarithmic grid search over (sigma^2, eta) followed by Nelder-Mead
// refinement in log coordinates from the best grid point.
inline FitResult fit_semivariogram(const EmpiricalSemivariogram& emp, ModelFamily family,
                                   const FitOptions& options = {}) {
  double h_min = kInfinity, h_max = 0.0, g_max = 0.0;
  index_t usable = 0;
  for (const auto& b : emp.bins) {
    if (!(b.mean_distance > 0.0)) continue;
    ++usable;
    h_min = std::min(h_min, b.mean_distance);
    h_max = std::max(h_max, b.mean_distance);
    g_max = std::max(g_max, b.gamma);
  }
  if (usable < 2) throw InputError("semivariogram fit needs at least two nonempty bins");
  if (!(g_max > 0.0)) throw NumericalError("empirical semivariogram is identically zero");

  const detail::FitBounds bounds{{std::log(1e-8 * g_max), std::log(1e-6 * h_min)},
                                 {std::log(1e3 * g_max), std::log(1e3 * h_max)}};
  const auto objective = [&](const std::array<double, 2>& x) {
    return wls_residual(emp, detail::model_at(family, x, bounds));
  };

  // Grid: sigma^2 in [0.1, 10] * g_max, eta in [0.1 h_min, 10 h_max].
  std::array<double, 2> best{};
  double f_best = kInfinity;
  const index_t g = std::max<index_t>(options.grid_points, 2);
  const double s_lo = std::log(0.1 * g_max), s_hi = std::log(10.0 * g_max);
  const double e_lo = std::log(0.1 * h_min), e_hi = std::log(10.0 * h_max);
  for (index_t a = 0; a < g; ++a)
    for (index_t c = 0; c < g; ++c) {
      const std::array<double, 2> x{s_lo + (s_hi - s_lo) * static_cast<double>(a) / static_cast<double>(g - 1),
                                    e_lo + (e_hi - e_lo) * static_cast<double>(c) / static_cast<double>(g - 1)};
      const double f = objective(x);
      if (f < f_best) {
        f_best = f;
        best = x;
      }
    }

  // Scale of the objective at gamma_theta = 0, for relative tolerances.
  double f_scale = 0.0;
  for (const auto& b : emp.bins)
    if (b.mean_distance > 0.0)
      f_scale += static_cast<double>(b.count) / (b.mean_distance * b.mean_distance) * b.gamma * b.gamma;

  using Vertex = std::array<double, 2>;
  std::array<Vertex, 3> simplex{best, {best[0] + 0.1, best[1]}, {best[0], best[1] + 0.1}};
  std::array<double, 3> fv{objective(simplex[0]), objective(simplex[1]), objective(simplex[2])};
  index_t it = 0;
  bool converged = false;
  const auto blend = [](const Vertex& p, const Vertex& q, double t) {
    return Vertex{p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])};
  };
  for (; it < options.max_iterations; ++it) {
    std::array<int, 3> ord{0, 1, 2};
    std::sort(ord.begin(), ord.end(), [&](int a, int b) { return fv[a] < fv[b]; });
    simplex = {simplex[ord[0]], simplex[ord[1]], simplex[ord[2]]};
    fv = {fv[ord[0]], fv[ord[1]], fv[ord[2]]};
    const double spread = fv[2] - fv[0];
    double diameter = 0.0;
    for (int k = 1; k < 3; ++k)
      diameter = std::max({diameter, std::abs(simplex[k][0] - simplex[0][0]), std::abs(simplex[k][1] - simplex[0][1])});
    if (diameter <= 1e-9 || spread <= 1e-22 * f_scale) {
      converged = true;
      break;
    }
    const Vertex centroid = blend(simplex[0], simplex[1], 0.5);
    const Vertex reflected = blend(centroid, simplex[2], -1.0);
    const double fr = objective(reflected);
    if (fr < fv[0]) {
      const Vertex expanded = blend(centroid, simplex[2], -2.0);
      const double fe = objective(expanded);
      if (fe < fr) {
        simplex[2] = expanded;
        fv[2] = fe;
      } else {
        simplex[2] = reflected;
        fv[2] = fr;
      }
      continue;
    }
    if (fr < fv[1]) {
      simplex[2] = reflected;
      fv[2] = fr;
      continue;
    }
    const bool outside = fr < fv[2];
    const Vertex contracted = outside ? blend(centroid, reflected, 0.5) : blend(centroid, simplex[2], 0.5);
    const double fc = objective(contracted);
    if (fc < std::min(fr, fv[2])) {
      simplex[2] = contracted;
      fv[2] = fc;
      continue;
    }
    for (int k = 1; k < 3; ++k) {
      simplex[k] = blend(simplex[0], simplex[k], 0.5);
      fv[k] = objective(simplex[k]);
    }
  }
  index_t best_vertex = 0;
  for (index_t k = 1; k < 3; ++k)
    if (fv[k] < fv[best_vertex]) best_vertex = k;
  FitResult r;
  r.model = detail::model_at(family, simplex[best_vertex], bounds);
  r.residual = fv[best_vertex];
  r.converged = converged;
  r.iterations = it;
  return r;
}

// ---------------------------------------------------------------------------
// CSV export
// ---------------------------------------------------------------------------

inline std::string format_g(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

// h, count, gamma
inline void write_semivariogram_csv(const EmpiricalSemivariogram& emp, std::ostream& out) {
  out << "h,count,gamma\n";
  for (const auto& b : emp.bins)
    out << format_g(b.mean_distance) << ',' << b.count << ',' << format_g(b.gamma) << '\n';
}

// h, gamma_model sampled on the empirical lags.
inline void write_fitted_curve_csv(const EmpiricalSemivariogram& emp, const ParametricModel& m,
                                   std::ostream& out) {
  out << "h,gamma_model\n";
  for (const auto& b : emp.bins)
    out << format_g(b.mean_distance) << ',' << format_g(m.semivariogram(b.mean_distance)) << '\n';
}

}  // namespace krigamg
