#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <queue>
#include <span>
#include <unordered_map>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "krigamg/errors.hpp"
#include "krigamg/problem.hpp"
#include "krigamg/random.hpp"
#include "krigamg/sparse.hpp"

namespace krigamg {

inline constexpr double kInfinity = std::numeric_limits<double>::infinity();

struct Neighbor {
  index_t index;
  double distance;

  friend bool operator==(const Neighbor&, const Neighbor&) = default;
};

// Orders by distance, then by index.
inline bool closer(const Neighbor& a, const Neighbor& b) {
  return a.distance < b.distance || (a.distance == b.distance && a.index < b.index);
}

// Length of edge {i, j} in the matrix graph.
inline double edge_length(double a_ij) { return 1.0 / std::abs(a_ij); }

// Truncated Dijkstra on the graph of `a` with edge lengths 1/|a_ij|. Returns
// every j with d(i, j) <= radius, sorted by distance then index.
inline std::vector<Neighbor> graph_distances_from(const SparseMatrix& a, index_t source,
                                                  double radius) {
  if (!(radius > 0.0)) throw InputError("radius must be positive");
  if (source >= a.rows()) throw InputError("source vertex out of range");
  using Entry = std::pair<double, index_t>;
  std::priority_queue<Entry, std::vector<Entry>, std::greater<>> heap;
  std::unordered_map<index_t, double> dist;
  std::vector<Neighbor> settled;
  dist[source] = 0.0;
  heap.push({0.0, source});
  while (!heap.empty()) {
    const auto [d, v] = heap.top();
    heap.pop();
    if (d > dist[v]) continue;
    settled.push_back({v, d});
    const auto cols = a.row_cols(v);
    const auto vals = a.row_values(v);
    for (std::size_t k = 0; k < cols.size(); ++k) {
      const index_t w = cols[k];
      if (w == v) continue;
      const double nd = d + edge_length(vals[k]);
      if (nd > radius) continue;
      const auto it = dist.find(w);
      if (it == dist.end() || nd < it->second) {
        dist[w] = nd;
        heap.push({nd, w});
      }
    }
  }
  std::sort(settled.begin(), settled.end(), closer);
  return settled;
}

// Untruncated single-source distances as a dense array (infinity when
// unreachable).
inline std::vector<double> graph_distances_all(const SparseMatrix& a, index_t source) {
  using Entry = std::pair<double, index_t>;
  std::vector<double> dist(a.rows(), kInfinity);
  std::priority_queue<Entry, std::vector<Entry>, std::greater<>> heap;
  dist[source] = 0.0;
  heap.push({0.0, source});
  while (!heap.empty()) {
    const auto [d, v] = heap.top();
    heap.pop();
    if (d > dist[v]) continue;
    const auto cols = a.row_cols(v);
    const auto vals = a.row_values(v);
    for (std::size_t k = 0; k < cols.size(); ++k) {
      if (cols[k] == v) continue;
      const double nd = d + edge_length(vals[k]);
      if (nd < dist[cols[k]]) {
        dist[cols[k]] = nd;
        heap.push({nd, cols[k]});
      }
    }
  }
  return dist;
}

inline double euclidean(const Point& p, const Point& q) {
  return std::hypot(p[0] - q[0], p[1] - q[1]);
}

// Median over variables of the shortest incident edge length.
inline double median_nearest_neighbor_distance(const SparseMatrix& a) {
  std::vector<double> nearest;
  nearest.reserve(a.rows());
  for (index_t i = 0; i < a.rows(); ++i) {
    double best = kInfinity;
    const auto cols = a.row_cols(i);
    const auto vals = a.row_values(i);
    for (std::size_t k = 0; k < cols.size(); ++k)
      if (cols[k] != i) best = std::min(best, edge_length(vals[k]));
    if (std::isfinite(best)) nearest.push_back(best);
  }
  if (nearest.empty()) return 1.0;
  const auto mid = nearest.begin() + static_cast<std::ptrdiff_t>(nearest.size() / 2);
  std::nth_element(nearest.begin(), mid, nearest.end());
  return *mid;
}

// Pseudo-distance between variables: shortest path in the matrix graph, or
// Euclidean distance between coordinates. Immutable once built.
class DistanceOracle {
 public:
  enum class Kind { graph, coordinate };

  static DistanceOracle graph(SparseMatrix a) {
    DistanceOracle o;
    o.kind_ = Kind::graph;
    o.matrix_ = std::move(a);
    o.n_ = o.matrix_.rows();
    return o;
  }

  static DistanceOracle coordinate(std::vector<Point> coords) {
    DistanceOracle o;
    o.kind_ = Kind::coordinate;
    o.n_ = coords.size();
    o.coords_ = std::move(coords);
    return o;
  }

  Kind kind() const { return kind_; }
  index_t size() const { return n_; }

  // All j with d(i, j) <= radius, sorted by (distance, index); includes i.
  std::vector<Neighbor> within(index_t i, double radius) const {
    if (kind_ == Kind::graph) return graph_distances_from(matrix_, i, radius);
    std::vector<Neighbor> out;
    for (index_t j = 0; j < n_; ++j) {
      const double d = euclidean(coords_[i], coords_[j]);
      if (d <= radius) out.push_back({j, d});
    }
    std::sort(out.begin(), out.end(), closer);
    return out;
  }

  double distance(index_t i, index_t j) const {
    if (kind_ == Kind::coordinate) return euclidean(coords_[i], coords_[j]);
    if (i == j) return 0.0;
    return graph_distances_all(matrix_, i)[j];
  }

  // Median distance from a variable to its nearest other variable.
  double median_edge_length() const {
    if (kind_ == Kind::graph) return median_nearest_neighbor_distance(matrix_);
    std::vector<double> nearest(n_, kInfinity);
    for (index_t i = 0; i < n_; ++i)
      for (index_t j = 0; j < n_; ++j)
        if (j != i) nearest[i] = std::min(nearest[i], euclidean(coords_[i], coords_[j]));
    if (nearest.empty()) return 1.0;
    const auto mid = nearest.begin() + static_cast<std::ptrdiff_t>(nearest.size() / 2);
    std::nth_element(nearest.begin(), mid, nearest.end());
    return *mid;
  }

  std::vector<double> distances_from(index_t i) const {
    if (kind_ == Kind::graph) return graph_distances_all(matrix_, i);
    std::vector<double> d(n_);
    for (index_t j = 0; j < n_; ++j) d[j] = euclidean(coords_[i], coords_[j]);
    return d;
  }

 private:
  Kind kind_ = Kind::graph;
  index_t n_ = 0;
  SparseMatrix matrix_;
  std::vector<Point> coords_;
};

// Lazily memoized neighborhoods for one fixed radius. Not thread-safe; each
// worker owns its own cache.
class NeighborhoodCache {
 public:
  NeighborhoodCache(const DistanceOracle& oracle, double radius)
      : oracle_(&oracle), radius_(radius), entries_(oracle.size()) {}

  double radius() const { return radius_; }

  const std::vector<Neighbor>& at(index_t i) {
    auto& slot = entries_[i];
    if (!slot) slot = oracle_->within(i, radius_);
    return *slot;
  }

  // d(i, j) when it is within the cached radius.
  std::optional<double> distance(index_t i, index_t j) {
    const auto& nb = at(i);
    for (const auto& e : nb)
      if (e.index == j) return e.distance;
    return std::nullopt;
  }

 private:
  const DistanceOracle* oracle_;
  double radius_;
  std::vector<std::optional<std::vector<Neighbor>>> entries_;
};

// Up to q_max coarse variables from a sorted neighborhood of i, nearest first
// with ties broken by index. i itself is never included.
inline std::vector<Neighbor> nearest_coarse(index_t i, std::span<const Neighbor> neighborhood,
                                            const std::vector<bool>& is_coarse, index_t q_max) {
  if (q_max < 1) throw InputError("caliber must be at least 1");
  std::vector<Neighbor> out;
  for (const auto& nb : neighborhood) {
    if (out.size() == q_max) break;
    if (nb.index != i && is_coarse[nb.index]) out.push_back(nb);
  }
  return out;
}

inline std::vector<Neighbor> nearest_coarse(index_t i, const std::vector<bool>& is_coarse,
                                            const DistanceOracle& oracle, index_t q_max,
                                            double radius) {
  const auto nb = oracle.within(i, radius);
  return nearest_coarse(i, nb, is_coarse, q_max);
}

struct EmbeddabilityResult {
  bool embeddable = false;
  double min_eigenvalue = 0.0;
};

// Euclidean embeddability of a distance matrix: -1/2 J D.^2 J must be
// positive semidefinite, J = I - 11^T/q.
inline EmbeddabilityResult check_local_embeddability(const Eigen::MatrixXd& d, double tol = 1e-10) {
  const Eigen::Index q = d.rows();
  if (q == 0) return {true, 0.0};
  const Eigen::MatrixXd d2 = d.array().square().matrix();
  const Eigen::MatrixXd j =
      Eigen::MatrixXd::Identity(q, q) - Eigen::MatrixXd::Constant(q, q, 1.0 / static_cast<double>(q));
  Eigen::MatrixXd gram = -0.5 * j * d2 * j;
  gram = 0.5 * (gram + gram.transpose()).eval();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram, Eigen::EigenvaluesOnly);
  const double lambda_min = eig.eigenvalues().minCoeff();
  const double scale = std::max(1.0, d2.cwiseAbs().maxCoeff());
  return {lambda_min >= -tol * scale, lambda_min};
}

inline double pearson(std::span<const double> x, std::span<const double> y) {
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    mx += x[k];
    my += y[k];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    sxy += (x[k] - mx) * (y[k] - my);
    sxx += (x[k] - mx) * (x[k] - mx);
    syy += (y[k] - my) * (y[k] - my);
  }
  return sxy / std::sqrt(sxx * syy);
}

struct DistancePairs {
  std::vector<double> graph;
  std::vector<double> coordinate;
};

// Samples `pairs` distinct-variable pairs uniformly (with replacement) and
// returns graph and coordinate distances for those whose graph distance is
// within `radius`.
inline DistancePairs sample_distance_pairs(const ProblemInstance& problem, index_t pairs,
                                           std::uint64_t seed, double radius = kInfinity) {
  if (!problem.coords) throw InputError("distance correlation needs coordinates");
  const index_t n = problem.size();
  if (n < 2) throw InputError("distance correlation needs at least two variables");
  Rng rng(seed);
  std::vector<std::pair<index_t, index_t>> sample;
  sample.reserve(pairs);
  while (sample.size() < pairs) {
    const auto i = static_cast<index_t>(rng.below(n));
    const auto j = static_cast<index_t>(rng.below(n));
    if (i != j) sample.emplace_back(i, j);
  }
  std::vector<index_t> order(sample.size());
  for (index_t k = 0; k < order.size(); ++k) order[k] = k;
  std::stable_sort(order.begin(), order.end(),
                   [&](index_t a, index_t b) { return sample[a].first < sample[b].first; });

  std::vector<double> graph(sample.size());
  index_t current = static_cast<index_t>(-1);
  std::vector<double> dist;
  for (index_t k : order) {
    if (sample[k].first != current) {
      current = sample[k].first;
      dist = graph_distances_all(problem.matrix, current);
    }
    graph[k] = dist[sample[k].second];
  }
  DistancePairs out;
  for (index_t k = 0; k < sample.size(); ++k) {
    if (!(graph[k] <= radius)) continue;
    out.graph.push_back(graph[k]);
    out.coordinate.push_back(euclidean((*problem.coords)[sample[k].first], (*problem.coords)[sample[k].second]));
  }
  return out;
}

// Pearson correlation between graph and coordinate distances over sampled
// pairs.
inline double distance_correlation(const ProblemInstance& problem, index_t pairs, std::uint64_t seed,
                                   double radius = kInfinity) {
  const auto s = sample_distance_pairs(problem, pairs, seed, radius);
  if (s.graph.size() < 2) throw InputError("too few pairs within radius");
  return pearson(s.graph, s.coordinate);
}

}  // namespace krigamg
