#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "krigamg/coarsen.hpp"
#include "krigamg/covariance.hpp"
#include "krigamg/errors.hpp"
#include "krigamg/kriging.hpp"
#include "krigamg/matrix_market.hpp"
#include "krigamg/metric.hpp"
#include "krigamg/problem.hpp"
#include "krigamg/random.hpp"
#include "krigamg/smoother.hpp"
#include "krigamg/twogrid.hpp"

namespace krigamg {

enum class ModelKind { emp, sph, exp };

inline std::string_view model_name(ModelKind m) {
  switch (m) {
    case ModelKind::emp: return "emp";
    case ModelKind::sph: return "sph";
    case ModelKind::exp: return "exp";
  }
  return "?";
}

inline ModelKind parse_model(std::string_view s) {
  if (s == "emp") return ModelKind::emp;
  if (s == "sph") return ModelKind::sph;
  if (s == "exp") return ModelKind::exp;
  throw InputError("unknown model '" + std::string(s) + "' (expected emp, sph or exp)");
}

inline ModelFamily family_of(ModelKind m) {
  if (m == ModelKind::emp) throw InputError("empirical model has no semivariogram family");
  return m == ModelKind::sph ? ModelFamily::spherical : ModelFamily::exponential;
}

// One run of the pipeline. Unset optionals take case-dependent defaults
// (see resolve_defaults).
struct RunConfig {
  std::string case_name;
  std::string matrix_path;
  std::string coords_path;
  ModelKind model = ModelKind::sph;
  index_t test_vectors = 1;  // K
  index_t sweeps = 1;        // nu
  std::uint64_t seed = 1;
  std::optional<index_t> q_max;
  double radius = 4.0;
  std::optional<double> nc_fraction;
  std::optional<double> tolerance;
  std::string out_dir = ".";
  MeanMode mean_mode = MeanMode::zero;
  std::optional<double> variogram_max_distance;  // default 2 * radius
  std::optional<double> bin_width;               // default median edge length
  index_t cloud_points = 2'000'000;              // pair budget is this / K
  bool batching = false;
  SelectionVariance selection = SelectionVariance::conditional;
  index_t rate_max_cycles = 400;
  double rate_stall_tol = 1e-3;
  double pcg_reduction = 1e-8;
  index_t pcg_max_it = 1000;
};

inline bool is_aniso(std::string_view c) { return c == "s-aniso" || c == "c-aniso"; }

// Table defaults: iso cases coarsen to n/4 with caliber 4; the anisotropic
// square uses n/2 and caliber 2, the anisotropic disc n/2 and caliber 3.
inline RunConfig resolve_defaults(RunConfig c) {
  if (!c.nc_fraction) c.nc_fraction = is_aniso(c.case_name) ? 0.5 : 0.25;
  if (!c.q_max) c.q_max = c.case_name == "s-aniso" ? 2 : c.case_name == "c-aniso" ? 3 : 4;
  if (!c.variogram_max_distance) c.variogram_max_distance = 2.0 * c.radius;
  return c;
}

inline void validate(const RunConfig& c) {
  if (c.case_name.empty() == c.matrix_path.empty()) throw InputError("give exactly one of --case or --matrix");
  if (c.test_vectors < 1 || c.test_vectors > 10000) throw InputError("K must lie in [1, 10000]");
  if (c.sweeps > 1000) throw InputError("nu must lie in [0, 1000]");
  if (c.q_max && (*c.q_max < 1 || *c.q_max > 64)) throw InputError("qmax must lie in [1, 64]");
  if (!(c.radius > 0.0)) throw InputError("radius must be positive");
  if (c.nc_fraction && !(*c.nc_fraction > 0.0 && *c.nc_fraction <= 1.0))
    throw InputError("nc-fraction must lie in (0, 1]");
  if (c.tolerance && !(*c.tolerance > 0.0)) throw InputError("tolerance must be positive");
  if (c.bin_width && !(*c.bin_width > 0.0)) throw InputError("bin width must be positive");
  if (c.variogram_max_distance && !(*c.variogram_max_distance > 0.0))
    throw InputError("variogram max distance must be positive");
  if (c.cloud_points < 1) throw InputError("cloud point budget must be positive");
}

inline ProblemInstance load_problem(const RunConfig& c) {
  if (!c.case_name.empty()) return make_case(c.case_name);
  return load_matrix_market(c.matrix_path,
                            c.coords_path.empty() ? std::nullopt : std::optional<std::filesystem::path>(c.coords_path));
}

inline std::string run_label(const RunConfig& c) { return c.case_name.empty() ? "external" : c.case_name; }

// Seeds of the independent random streams of one run.
enum Stream : std::uint64_t { kTestVectors = 1, kCloud = 2, kRate = 3, kRhs = 4 };

struct VariogramResult {
  EmpiricalSemivariogram empirical;
  FitResult fit;
  index_t cloud_size = 0;
};

// Test vectors -> graph-distance variogram cloud -> binned semivariogram ->
// weighted least squares fit.
inline VariogramResult fit_variogram(const TestVectorSet& v, const DistanceOracle& oracle, ModelFamily family,
                                     double max_distance, double bin_width, index_t cloud_points, std::uint64_t seed) {
  const index_t budget = std::max<index_t>(1, cloud_points / v.count);
  const auto cloud = build_variogram_cloud(v, oracle, max_distance, budget, seed);
  VariogramResult r;
  r.cloud_size = cloud.size();
  r.empirical = bin_semivariogram(cloud, bin_width);
  r.fit = fit_semivariogram(r.empirical, family);
  return r;
}

struct SolveReport {
  std::string case_label;
  ModelKind model = ModelKind::sph;
  index_t test_vectors = 0;
  index_t n = 0;
  index_t n_coarse = 0;
  index_t q_max = 0;
  double radius = 0.0;
  RateEstimate rate;            // E_2g with the same sweep before and after
  RateEstimate rate_symmetric;  // the symmetric cycle used inside PCG
  PcgReport pcg;
  std::optional<ParametricModel> fitted;
  bool fit_converged = true;
  CoarseningDiagnostics coarsening;
  SplittingReport splitting;
  double max_fine_variance = 0.0;
  double seconds = 0.0;
};

// Everything the coarsening needs: problem, smoother coloring, test vectors
// and the covariance source built from them.
struct PreparedRun {
  RunConfig config;  // defaults resolved
  ProblemInstance problem;
  Coloring coloring;
  std::shared_ptr<const TestVectorSet> vectors;
  DistanceOracle oracle;
  CovarianceSource source;
  std::optional<VariogramResult> variogram;
};

inline PreparedRun prepare_run(RunConfig config) {
  validate(config);
  config = resolve_defaults(config);
  ProblemInstance prob = load_problem(config);
  require_system_matrix(prob.matrix);
  Coloring coloring = greedy_coloring(prob.matrix);
  auto vectors = std::make_shared<const TestVectorSet>(generate_test_vectors(
      prob.matrix, coloring, config.test_vectors, config.sweeps, derive_seed(config.seed, kTestVectors)));
  DistanceOracle oracle = DistanceOracle::graph(prob.matrix);
  CovarianceSource source;
  std::optional<VariogramResult> vg;
  if (config.model == ModelKind::emp) {
    source = EmpiricalCovariance{vectors, config.mean_mode, 1e-8};
  } else {
    const double width = config.bin_width.value_or(oracle.median_edge_length());
    vg = fit_variogram(*vectors, oracle, family_of(config.model), *config.variogram_max_distance, width,
                       config.cloud_points, derive_seed(config.seed, kCloud));
    source = vg->fit.model;
  }
  return PreparedRun{std::move(config), std::move(prob),   std::move(coloring), std::move(vectors),
                     std::move(oracle), std::move(source), std::move(vg)};
}

inline CoarsenOptions coarsen_options(const RunConfig& c, index_t n) {
  CoarsenOptions opts;
  opts.q_max = c.q_max.value_or(4);
  opts.radius = c.radius;
  opts.batching = c.batching;
  opts.selection = c.selection;
  if (c.tolerance) {
    opts.tolerance = c.tolerance;
  } else {
    const double frac = c.nc_fraction.value_or(0.25);
    opts.target_coarse = std::max<index_t>(1, static_cast<index_t>(std::floor(frac * static_cast<double>(n))));
  }
  return opts;
}

inline CoarseningResult run_coarsen(const PreparedRun& run) {
  return coarsen(run.oracle, run.source, coarsen_options(run.config, run.problem.size()));
}

struct SolveArtifacts {
  SolveReport report;
  ProblemInstance problem;
  CoarseningResult coarsening;
};

// The full pipeline: test vectors, covariance source, coarsening, two-grid
// method, asymptotic rate and PCG iteration count.
inline SolveArtifacts run_solve(const RunConfig& config) {
  const auto start = std::chrono::steady_clock::now();
  PreparedRun run = prepare_run(config);
  const RunConfig& c = run.config;
  SolveArtifacts out;
  out.coarsening = run_coarsen(run);

  SolveReport& rep = out.report;
  rep.case_label = run_label(c);
  rep.model = c.model;
  rep.test_vectors = c.test_vectors;
  rep.n = run.problem.size();
  rep.q_max = *c.q_max;
  rep.radius = c.radius;
  if (run.variogram) {
    rep.fitted = run.variogram->fit.model;
    rep.fit_converged = run.variogram->fit.converged;
  }
  rep.n_coarse = out.coarsening.state.coarse.size();
  rep.coarsening = out.coarsening.state.diagnostics;
  rep.splitting = splitting_report(out.coarsening.state, run.oracle, c.radius);
  rep.max_fine_variance = out.coarsening.state.max_fine_variance();

  const TwoGridOperator op(run.problem.matrix, out.coarsening.interpolation.p, run.coloring);
  rep.rate = estimate_asymptotic_rate(op.with_pairing(SweepPairing::repeated), derive_seed(c.seed, kRate),
                                      c.rate_max_cycles, c.rate_stall_tol);
  rep.rate_symmetric = estimate_asymptotic_rate(op, derive_seed(c.seed, kRate), c.rate_max_cycles, c.rate_stall_tol);
  Rng rhs_rng(derive_seed(c.seed, kRhs));
  Vector b(rep.n);
  for (auto& v : b) v = rhs_rng.normal();
  rep.pcg = pcg_solve(op, b, c.pcg_reduction, c.pcg_max_it);
  if (rep.pcg.indefinite_preconditioner) throw NumericalError("two-grid preconditioner is not positive definite");
  out.problem = std::move(run.problem);
  rep.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return out;
}

// ---------------------------------------------------------------------------
// CSV writers
// ---------------------------------------------------------------------------

inline constexpr std::string_view kSolveCsvHeader =
    "case,model,K,n,n_c,q_max,radius,rho,k,rho_symmetric,rho_l2,converged,sigma2,eta,fit_converged,"
    "negative_variances,embeddability_failures,embeddability_checked,empty_stencils,caliber_reductions";

inline void write_solve_row(const SolveReport& r, std::ostream& out) {
  out << r.case_label << ',' << model_name(r.model) << ',' << r.test_vectors << ',' << r.n << ',' << r.n_coarse << ','
      << r.q_max << ',' << format_g(r.radius) << ',' << format_g(r.rate.rho) << ',' << r.pcg.iterations << ','
      << format_g(r.rate_symmetric.rho) << ',' << format_g(r.rate.rho_l2) << ',' << (r.pcg.converged ? 1 : 0) << ','
      << (r.fitted ? format_g(r.fitted->sigma2) : "") << ',' << (r.fitted ? format_g(r.fitted->eta) : "") << ','
      << (r.fit_converged ? 1 : 0) << ',' << r.splitting.negative_variances << ',' << r.splitting.embeddability_failures
      << ',' << r.splitting.embeddability_checked << ',' << r.splitting.empty_stencils << ','
      << r.coarsening.caliber_reductions << '\n';
}

// index, x, y, role (C|F); x and y are empty without coordinates.
inline void write_splitting_csv(const ProblemInstance& p, const PartitionState& s, std::ostream& out) {
  out << "index,x,y,role\n";
  for (index_t i = 0; i < s.n; ++i) {
    out << i << ',';
    if (p.coords) out << format_g((*p.coords)[i][0]) << ',' << format_g((*p.coords)[i][1]);
    else out << ',';
    out << ',' << (s.is_coarse[i] ? 'C' : 'F') << '\n';
  }
}

// ---------------------------------------------------------------------------
// key=value configuration files
// ---------------------------------------------------------------------------

// Parses "key = value" lines ('#' starts a comment). Keys must be in
// `allowed`.
inline std::map<std::string, std::string> read_config_file(const std::filesystem::path& path,
                                                           const std::vector<std::string>& allowed) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open config file " + path.string());
  std::map<std::string, std::string> kv;
  std::string line;
  index_t lineno = 0;
  const auto trim = [](std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return std::string();
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
  };
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw InputError("config line " + std::to_string(lineno) + " lacks '='");
    const std::string key = trim(line.substr(0, eq));
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end())
      throw InputError("unknown config key '" + key + "'");
    kv[key] = trim(line.substr(eq + 1));
  }
  return kv;
}

}  // namespace krigamg
