#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "krigamg/covariance.hpp"
#include "krigamg/errors.hpp"
#include "krigamg/kriging.hpp"
#include "krigamg/metric.hpp"
#include "krigamg/sparse.hpp"

namespace krigamg {

inline constexpr index_t kNotCoarse = std::numeric_limits<index_t>::max();

// Which variance drives the greedy selection. `conditional` is the Gaussian
// conditional variance C_ii - C_iC C_C^-1 C_Ci; `estimator` is the variance
// of the interpolation actually built (the BLUP variance under blup means).
enum class SelectionVariance { conditional, estimator };

struct CoarsenOptions {
  index_t q_max = 4;
  double radius = 4.0;
  MeanHandling mean_handling = MeanHandling::blup;
  SelectionVariance selection = SelectionVariance::conditional;
  // Stop once |C| reaches this count ...
  std::optional<index_t> target_coarse;
  // ... or once every fine variance is at most this value.
  std::optional<double> tolerance;
  bool batching = false;
  // Defaults to 2 * radius + one median edge length when batching.
  std::optional<double> min_separation;
  // Drop the farthest interpolatory point while the local covariance is not
  // positive definite.
  bool reduce_caliber = true;
};

struct CoarseningDiagnostics {
  index_t caliber_reductions = 0;
  index_t regularizations = 0;
  index_t ill_conditioned = 0;
  index_t negative_variance_events = 0;
};

// C/F splitting with per-variable Kriging stencils and selection variances.
// Variances are stored as computed (possibly slightly negative under
// non-embeddable metrics) and clamped at zero for selection.
struct PartitionState {
  index_t n = 0;
  std::vector<index_t> coarse;  // insertion order
  std::vector<bool> is_coarse;
  std::vector<double> variance;
  std::vector<KrigingStencil> stencils;
  CoarseningDiagnostics diagnostics;

  index_t num_fine() const { return n - coarse.size(); }
  double selection_variance(index_t i) const { return is_coarse[i] ? 0.0 : std::max(variance[i], 0.0); }

  double max_fine_variance() const {
    double m = 0.0;
    for (index_t i = 0; i < n; ++i)
      if (!is_coarse[i]) m = std::max(m, selection_variance(i));
    return m;
  }
};

// Interpolation in canonical form: coarse variable rows are unit rows,
// columns follow the insertion order of C.
struct InterpolationOperator {
  index_t n = 0;
  index_t n_coarse = 0;
  SparseMatrix p;
  std::vector<index_t> coarse_column;    // variable -> column, kNotCoarse for F
  std::vector<index_t> coarse_variable;  // column -> variable
};

// Everything the stencil updates read: immutable inputs plus two distance
// caches (localization radius and twice that, which bounds the distance
// between two members of one interpolatory set).
class CoarseningContext {
 public:
  CoarseningContext(const DistanceOracle& oracle, CovarianceSource source, CoarsenOptions options)
      : oracle_(&oracle),
        source_(std::move(source)),
        options_(std::move(options)),
        local_(oracle, options_.radius),
        pair_(oracle, 2.0 * options_.radius) {
    if (options_.q_max < 1) throw InputError("caliber q_max must be at least 1");
    if (!(options_.radius > 0.0)) throw InputError("localization radius must be positive");
  }

  const DistanceOracle& oracle() const { return *oracle_; }
  const CovarianceSource& source() const { return source_; }
  const CoarsenOptions& options() const { return options_; }
  NeighborhoodCache& local() { return local_; }

  double distance(index_t a, index_t b) {
    if (a == b) return 0.0;
    if (a > b) std::swap(a, b);
    if (oracle_->kind() == DistanceOracle::Kind::coordinate) return oracle_->distance(a, b);
    if (auto d = pair_.distance(a, b)) return *d;
    return oracle_->distance(a, b);
  }

 private:
  const DistanceOracle* oracle_;
  CovarianceSource source_;
  CoarsenOptions options_;
  NeighborhoodCache local_;
  NeighborhoodCache pair_;
};

// C = {}, F = V, variance_i = C_ii.
inline PartitionState init_variances(index_t n, const CovarianceSource& source) {
  PartitionState s;
  s.n = n;
  s.is_coarse.assign(n, false);
  s.variance.resize(n);
  s.stencils.resize(n);
  for (index_t i = 0; i < n; ++i) {
    const LocalCovariance local = assemble_local_cov(i, {}, source);
    s.variance[i] = local.fine_variance();
    if (local.regularized) ++s.diagnostics.regularizations;
    s.stencils[i].fine = i;
    s.stencils[i].variance = local.fine_variance();
  }
  return s;
}

// argmax of the clamped variance over F; ties go to the smallest index.
inline index_t select_next(const PartitionState& s) {
  index_t best = kNotCoarse;
  double best_var = -1.0;
  for (index_t i = 0; i < s.n; ++i) {
    if (s.is_coarse[i]) continue;
    const double v = s.selection_variance(i);
    if (v > best_var) {
      best_var = v;
      best = i;
    }
  }
  if (best == kNotCoarse) throw InputError("no fine variables left to select");
  return best;
}

// Sweeps F by descending variance (ties by index) and keeps every candidate
// farther than `min_separation` from all previously kept ones, up to `limit`.
inline std::vector<index_t> select_batch(const PartitionState& s, const DistanceOracle& oracle,
                                         double min_separation, index_t limit = kNotCoarse) {
  if (s.num_fine() == 0) throw InputError("no fine variables left to select");
  if (!std::isfinite(min_separation)) return {select_next(s)};
  std::vector<index_t> order;
  order.reserve(s.num_fine());
  for (index_t i = 0; i < s.n; ++i)
    if (!s.is_coarse[i]) order.push_back(i);
  std::stable_sort(order.begin(), order.end(), [&](index_t a, index_t b) {
    return s.selection_variance(a) > s.selection_variance(b);
  });
  std::vector<bool> blocked(s.n, false);
  std::vector<index_t> accepted;
  for (index_t c : order) {
    if (accepted.size() >= std::max<index_t>(limit, 1)) break;
    if (blocked[c]) continue;
    accepted.push_back(c);
    for (const auto& nb : oracle.within(c, min_separation)) blocked[nb.index] = true;
  }
  return accepted;
}

// Rebuilds the stencil of fine variable j from its current nearest coarse
// points.
inline void recompute_stencil(PartitionState& s, index_t j, CoarseningContext& ctx) {
  const auto& opts = ctx.options();
  const auto chosen = nearest_coarse(j, ctx.local().at(j), s.is_coarse, opts.q_max);
  std::vector<index_t> ids;
  ids.reserve(chosen.size());
  for (const auto& c : chosen) ids.push_back(c.index);
  const DistanceFn dist = [&ctx](index_t a, index_t b) { return ctx.distance(a, b); };

  while (true) {
    const LocalCovariance local = assemble_local_cov(j, ids, ctx.source(), dist);
    if (!local.positive_definite && opts.reduce_caliber && ids.size() > 1) {
      ids.pop_back();
      ++s.diagnostics.caliber_reductions;
      continue;
    }
    try {
      KrigingStencil st = krige(j, ids, local, opts.mean_handling);
      const double v = opts.selection == SelectionVariance::estimator || opts.mean_handling == MeanHandling::zero_mean
                           ? st.variance
                           : simple_kriging(j, ids, local).variance;
      if (local.regularized) ++s.diagnostics.regularizations;
      if (local.ill_conditioned) ++s.diagnostics.ill_conditioned;
      if (v < 0.0) ++s.diagnostics.negative_variance_events;
      s.variance[j] = v;
      s.stencils[j] = std::move(st);
      return;
    } catch (const NumericalError&) {
      if (ids.size() <= 1) throw;
      ids.pop_back();
      ++s.diagnostics.caliber_reductions;
    }
  }
}

// Moves `added` into C and refreshes every fine variable within the
// localization radius of an added point.
inline void update_after_add(PartitionState& s, std::span<const index_t> added, CoarseningContext& ctx) {
  for (index_t a : added) {
    if (a >= s.n || s.is_coarse[a]) throw InputError("added variable is not fine");
    s.is_coarse[a] = true;
    s.coarse.push_back(a);
    s.variance[a] = 0.0;
    s.stencils[a] = KrigingStencil{a, {}, {}, 0.0, ctx.options().mean_handling};
  }
  std::vector<index_t> affected;
  for (index_t a : added)
    for (const auto& nb : ctx.local().at(a))
      if (!s.is_coarse[nb.index]) affected.push_back(nb.index);
  std::sort(affected.begin(), affected.end());
  affected.erase(std::unique(affected.begin(), affected.end()), affected.end());
  for (index_t j : affected) recompute_stencil(s, j, ctx);
}

// Recomputes every fine stencil from scratch.
inline void recompute_all_stencils(PartitionState& s, CoarseningContext& ctx) {
  for (index_t j = 0; j < s.n; ++j)
    if (!s.is_coarse[j]) recompute_stencil(s, j, ctx);
}

inline InterpolationOperator assemble_interpolation(const PartitionState& s) {
  InterpolationOperator op;
  op.n = s.n;
  op.n_coarse = s.coarse.size();
  op.coarse_variable = s.coarse;
  op.coarse_column.assign(s.n, kNotCoarse);
  for (index_t c = 0; c < s.coarse.size(); ++c) op.coarse_column[s.coarse[c]] = c;
  std::vector<Triplet> t;
  for (index_t i = 0; i < s.n; ++i) {
    if (s.is_coarse[i]) {
      t.push_back({i, op.coarse_column[i], 1.0});
      continue;
    }
    const auto& st = s.stencils[i];
    for (std::size_t k = 0; k < st.coarse.size(); ++k)
      t.push_back({i, op.coarse_column[st.coarse[k]], st.weights[k]});
  }
  op.p = SparseMatrix::from_triplets(s.n, op.n_coarse, std::move(t));
  return op;
}

struct CoarseningResult {
  PartitionState state;
  InterpolationOperator interpolation;
  index_t iterations = 0;
};

// Greedy coarsening: repeatedly move the most uncertain fine variable(s)
// into C and refresh the affected stencils, until the coarse-count target or
// the variance tolerance is met.
inline CoarseningResult coarsen(const DistanceOracle& oracle, const CovarianceSource& source,
                                const CoarsenOptions& options) {
  const index_t n = oracle.size();
  if (!options.target_coarse && !options.tolerance)
    throw InputError("coarsening needs a coarse-count target or a variance tolerance");
  if (options.target_coarse && (*options.target_coarse < 1 || *options.target_coarse > n))
    throw InputError("coarse-count target must lie in [1, n]");
  if (options.tolerance && !(*options.tolerance > 0.0)) throw InputError("variance tolerance must be positive");

  CoarseningContext ctx(oracle, source, options);
  double min_sep = kInfinity;
  if (options.batching) {
    min_sep = options.min_separation.value_or(2.0 * options.radius + oracle.median_edge_length());
    if (min_sep < 2.0 * options.radius) throw InputError("min_separation must be at least twice the radius");
  }

  CoarseningResult r{init_variances(n, source), {}, 0};
  PartitionState& s = r.state;
  const auto done = [&] {
    if (s.num_fine() == 0) return true;
    if (options.target_coarse && s.coarse.size() >= *options.target_coarse) return true;
    if (options.tolerance && s.max_fine_variance() <= *options.tolerance) return true;
    return false;
  };
  while (!done()) {
    const index_t limit = options.target_coarse ? *options.target_coarse - s.coarse.size() : kNotCoarse;
    std::vector<index_t> added =
        options.batching ? select_batch(s, oracle, min_sep, limit) : std::vector<index_t>{select_next(s)};
    update_after_add(s, added, ctx);
    ++r.iterations;
  }
  r.interpolation = assemble_interpolation(s);
  return r;
}

struct SplittingReport {
  index_t empty_stencils = 0;
  index_t negative_variances = 0;
  index_t embeddability_checked = 0;
  index_t embeddability_failures = 0;
};

// Post-hoc diagnostics: fine points without interpolatory set, negative
// final variances, and local embeddability of C_i + {i} under the oracle.
inline SplittingReport splitting_report(const PartitionState& s, const DistanceOracle& oracle, double radius) {
  SplittingReport rep;
  NeighborhoodCache pair(oracle, 2.0 * radius);
  for (index_t i = 0; i < s.n; ++i) {
    if (s.is_coarse[i]) continue;
    const auto& st = s.stencils[i];
    if (st.coarse.empty()) {
      ++rep.empty_stencils;
      continue;
    }
    if (s.variance[i] < 0.0) ++rep.negative_variances;
    if (st.coarse.size() < 2) continue;
    std::vector<index_t> ids = st.coarse;
    ids.push_back(i);
    const auto q = static_cast<Eigen::Index>(ids.size());
    Eigen::MatrixXd d = Eigen::MatrixXd::Zero(q, q);
    for (Eigen::Index a = 0; a < q; ++a)
      for (Eigen::Index b = 0; b < a; ++b) {
        const index_t lo = std::min(ids[a], ids[b]);
        const index_t hi = std::max(ids[a], ids[b]);
        double v = oracle.kind() == DistanceOracle::Kind::coordinate ? oracle.distance(lo, hi)
                                                                      : pair.distance(lo, hi).value_or(kInfinity);
        if (!std::isfinite(v)) v = oracle.distance(lo, hi);
        d(a, b) = d(b, a) = v;
      }
    ++rep.embeddability_checked;
    if (!check_local_embeddability(d).embeddable) ++rep.embeddability_failures;
  }
  return rep;
}

}  // namespace krigamg
