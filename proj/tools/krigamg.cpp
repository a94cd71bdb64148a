// krigamg: problem generation, semivariogram fits, coarsening and two-grid
// solves from the command line.

#include <charconv>
#include <cstdio>
#include <ctime>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "krigamg/pipeline.hpp"

namespace fs = std::filesystem;
using namespace krigamg;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitNumerical = 2;

// Flag values stay strings until config-file values and flags are merged.
const std::vector<std::pair<std::string, std::string>> kFlags = {
    {"case", "s-iso, c-iso, s-aniso or c-aniso (table: comma list)"},
    {"matrix", "Matrix Market file instead of a built-in case"},
    {"coords", "coordinate file for --matrix (optional)"},
    {"model", "covariance source: emp, sph or exp"},
    {"K", "number of test vectors (variogram/table: comma list)"},
    {"nu", "smoothing sweeps per test vector"},
    {"seed", "master seed"},
    {"qmax", "max coarse points per interpolatory set"},
    {"radius", "localization radius in graph distance"},
    {"nc-fraction", "coarse count as a fraction of n"},
    {"tolerance", "stop when the largest fine variance drops below this"},
    {"out", "output directory"},
    {"table", "iso or aniso"},
    {"bin-width", "semivariogram bin width"},
    {"max-distance", "largest lag in the variogram cloud"},
    {"mean", "empirical covariance mean: zero or estimated"},
    {"batching", "off or on: add several separated points per step"},
    {"selection", "selection variance: conditional or estimator"}};

std::vector<std::string> flag_keys() {
  std::vector<std::string> keys;
  for (const auto& f : kFlags) keys.push_back(f.first);
  return keys;
}

std::string stamp_line(const std::string& what) {
  const std::time_t t = std::time(nullptr);
  char buf[64];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
  return "# krigamg " + what + " " + buf + "\n";
}

template <class T>
T parse_number(const std::string& key, const std::string& v) {
  T out{};
  const auto [end, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || end != v.data() + v.size()) throw InputError("invalid value '" + v + "' for " + key);
  return out;
}

std::vector<index_t> parse_k_list(const std::string& v) {
  std::vector<index_t> ks;
  std::stringstream in(v);
  std::string item;
  while (std::getline(in, item, ',')) ks.push_back(parse_number<index_t>("K", item));
  if (ks.empty()) throw InputError("empty K list");
  return ks;
}

std::vector<std::string> split(const std::string& v) {
  std::vector<std::string> out;
  std::stringstream in(v);
  std::string item;
  while (std::getline(in, item, ',')) out.push_back(item);
  return out;
}

RunConfig to_config(const std::map<std::string, std::string>& kv) {
  RunConfig c;
  const auto get = [&](const char* k) -> const std::string* {
    const auto it = kv.find(k);
    return it == kv.end() ? nullptr : &it->second;
  };
  if (auto v = get("case")) c.case_name = *v;
  if (auto v = get("matrix")) c.matrix_path = *v;
  if (auto v = get("coords")) c.coords_path = *v;
  if (auto v = get("model")) c.model = parse_model(*v);
  if (auto v = get("K")) {
    const auto ks = parse_k_list(*v);
    c.test_vectors = ks.front();
  }
  if (auto v = get("nu")) c.sweeps = parse_number<index_t>("nu", *v);
  if (auto v = get("seed")) c.seed = parse_number<std::uint64_t>("seed", *v);
  if (auto v = get("qmax")) c.q_max = parse_number<index_t>("qmax", *v);
  if (auto v = get("radius")) c.radius = parse_number<double>("radius", *v);
  if (auto v = get("nc-fraction")) c.nc_fraction = parse_number<double>("nc-fraction", *v);
  if (auto v = get("tolerance")) c.tolerance = parse_number<double>("tolerance", *v);
  if (auto v = get("out")) c.out_dir = *v;
  if (auto v = get("bin-width")) c.bin_width = parse_number<double>("bin-width", *v);
  if (auto v = get("max-distance")) c.variogram_max_distance = parse_number<double>("max-distance", *v);
  if (auto v = get("mean")) {
    if (*v == "zero") c.mean_mode = MeanMode::zero;
    else if (*v == "estimated") c.mean_mode = MeanMode::estimated;
    else throw InputError("mean must be zero or estimated");
  }
  if (auto v = get("selection")) {
    if (*v == "conditional") c.selection = SelectionVariance::conditional;
    else if (*v == "estimator") c.selection = SelectionVariance::estimator;
    else throw InputError("selection must be conditional or estimator");
  }
  if (auto v = get("batching")) {
    if (*v == "1" || *v == "true" || *v == "on") c.batching = true;
    else if (*v == "0" || *v == "false" || *v == "off") c.batching = false;
    else throw InputError("batching must be on or off");
  }
  return c;
}

fs::path out_path(const RunConfig& c, const std::string& name) {
  fs::create_directories(c.out_dir);
  return fs::path(c.out_dir) / name;
}

std::ofstream open_out(const fs::path& p) {
  std::ofstream f(p);
  if (!f) throw InputError("cannot write " + p.string());
  return f;
}

std::string stem(const RunConfig& c) { return run_label(c); }

std::string model_tag(ModelKind m, index_t k) { return std::string(model_name(m)) + "-" + std::to_string(k); }

int cmd_generate(const std::map<std::string, std::string>& kv) {
  RunConfig c = to_config(kv);
  if (c.case_name.empty()) throw InputError("generate needs --case");
  const ProblemInstance p = make_case(c.case_name);
  const fs::path base = out_path(c, c.case_name);
  save_matrix_market(p.matrix, base.string() + ".mtx");
  if (p.coords) write_coordinates(*p.coords, base.string() + ".coords");
  std::cout << c.case_name << ": n=" << p.size() << " nnz=" << p.matrix.nnz() << " -> " << base.string() << ".mtx\n";
  return kExitOk;
}

int cmd_variogram(const std::map<std::string, std::string>& kv) {
  RunConfig base = to_config(kv);
  std::vector<ModelKind> families{ModelKind::sph, ModelKind::exp};
  if (kv.count("model")) {
    if (base.model == ModelKind::emp) throw InputError("variogram needs a parametric model (sph or exp)");
    families = {base.model};
  }
  const std::vector<index_t> ks = kv.count("K") ? parse_k_list(kv.at("K")) : std::vector<index_t>{1, 10, 100};
  auto summary = open_out(out_path(base, stem(base) + "_variogram_fits.csv"));
  summary << stamp_line("variogram");
  summary << "case,model,K,sigma2,eta,residual,converged,bins,cloud_pairs\n";
  for (const index_t k : ks) {
    for (const ModelKind fam : families) {
      RunConfig c = base;
      c.model = fam;
      c.test_vectors = k;
      const PreparedRun run = prepare_run(c);
      const VariogramResult& vg = *run.variogram;
      const std::string tag = stem(c) + "_" + model_tag(fam, k);
      {
        auto f = open_out(out_path(c, tag + "_empirical.csv"));
        write_semivariogram_csv(vg.empirical, f);
      }
      {
        auto f = open_out(out_path(c, tag + "_fit.csv"));
        write_fitted_curve_csv(vg.empirical, vg.fit.model, f);
      }
      summary << stem(c) << ',' << model_name(fam) << ',' << k << ',' << format_g(vg.fit.model.sigma2) << ','
              << format_g(vg.fit.model.eta) << ',' << format_g(vg.fit.residual) << ',' << (vg.fit.converged ? 1 : 0)
              << ',' << vg.empirical.bins.size() << ',' << vg.cloud_size << '\n';
      if (!vg.fit.converged) std::cerr << "warning: " << tag << " fit did not converge\n";
    }
  }
  return kExitOk;
}

int cmd_coarsen(const std::map<std::string, std::string>& kv) {
  const PreparedRun run = prepare_run(to_config(kv));
  const CoarseningResult res = run_coarsen(run);
  const RunConfig& c = run.config;
  const std::string tag = stem(c) + "_" + model_tag(c.model, c.test_vectors);
  {
    auto f = open_out(out_path(c, tag + "_splitting.csv"));
    write_splitting_csv(run.problem, res.state, f);
  }
  write_matrix_market(res.interpolation.p, out_path(c, tag + "_P.mtx"));
  const SplittingReport rep = splitting_report(res.state, run.oracle, c.radius);
  auto f = open_out(out_path(c, tag + "_coarsen.csv"));
  f << stamp_line("coarsen");
  f << "case,model,K,n,n_c,q_max,radius,max_fine_variance,negative_variances,embeddability_failures,"
       "embeddability_checked,caliber_reductions,regularizations\n";
  f << stem(c) << ',' << model_name(c.model) << ',' << c.test_vectors << ',' << res.state.n << ','
    << res.state.coarse.size() << ',' << *c.q_max << ',' << format_g(c.radius) << ','
    << format_g(res.state.max_fine_variance()) << ',' << rep.negative_variances << ',' << rep.embeddability_failures
    << ',' << rep.embeddability_checked << ',' << res.state.diagnostics.caliber_reductions << ','
    << res.state.diagnostics.regularizations << '\n';
  std::cout << tag << ": n_c=" << res.state.coarse.size() << " of " << res.state.n << '\n';
  return kExitOk;
}

int cmd_solve(const std::map<std::string, std::string>& kv) {
  const RunConfig c = resolve_defaults(to_config(kv));
  const SolveArtifacts art = run_solve(c);
  const SolveReport& r = art.report;
  const std::string tag = stem(c) + "_" + model_tag(c.model, c.test_vectors);
  {
    auto f = open_out(out_path(c, tag + "_solve.csv"));
    char t[64];
    std::snprintf(t, sizeof t, "elapsed_s=%.3f", r.seconds);
    f << stamp_line(std::string("solve ") + t);
    f << kSolveCsvHeader << '\n';
    write_solve_row(r, f);
  }
  {
    auto f = open_out(out_path(c, tag + "_splitting.csv"));
    write_splitting_csv(art.problem, art.coarsening.state, f);
  }
  std::cout << tag << ": n_c=" << r.n_coarse << " rho=" << format_g(r.rate.rho) << " k=" << r.pcg.iterations
            << (r.pcg.converged ? "" : " (not converged)") << '\n';
  return kExitOk;
}

// Rows of the iso / aniso tables: two cases, eight covariance sources.
int cmd_table(const std::map<std::string, std::string>& kv) {
  RunConfig base = to_config(kv);
  const std::string which = kv.count("table") ? kv.at("table") : "iso";
  std::vector<std::string> cases;
  if (!base.case_name.empty()) cases = split(base.case_name);
  else if (which == "iso") cases = {"s-iso", "c-iso"};
  else if (which == "aniso") cases = {"s-aniso", "c-aniso"};
  else throw InputError("table must be iso or aniso");
  std::vector<std::pair<ModelKind, index_t>> cells{{ModelKind::emp, 10}, {ModelKind::emp, 100}, {ModelKind::sph, 1},
                                                   {ModelKind::sph, 10}, {ModelKind::sph, 100}, {ModelKind::exp, 1},
                                                   {ModelKind::exp, 10}, {ModelKind::exp, 100}};
  if (kv.count("model")) {
    const ModelKind m = parse_model(kv.at("model"));
    const auto ks = kv.count("K") ? parse_k_list(kv.at("K")) : std::vector<index_t>{1};
    cells.clear();
    for (index_t k : ks) cells.push_back({m, k});
  }
  for (const auto& name : cases) make_case(name);  // reject bad names before any work

  auto f = open_out(out_path(base, "table_" + (base.case_name.empty() ? which : std::string("custom")) + ".csv"));
  f << stamp_line("table");
  f << kSolveCsvHeader << ",status\n";
  int failures = 0;
  for (const auto& name : cases) {
    for (const auto& [m, k] : cells) {
      RunConfig c = base;
      c.case_name = name;
      c.model = m;
      c.test_vectors = k;
      c.q_max = kv.count("qmax") ? base.q_max : std::nullopt;
      c.nc_fraction = kv.count("nc-fraction") ? base.nc_fraction : std::nullopt;
      try {
        const SolveArtifacts art = run_solve(c);
        std::ostringstream row;
        write_solve_row(art.report, row);
        std::string line = row.str();
        line.pop_back();
        f << line << ",ok\n";
        std::cout << name << ' ' << model_tag(m, k) << ": rho=" << format_g(art.report.rate.rho)
                  << " k=" << art.report.pcg.iterations << '\n';
      } catch (const NumericalError& e) {
        ++failures;
        f << name << ',' << model_name(m) << ',' << k << ",,,,,,,,,,,,,,,,,,\"failed: " << e.what() << "\"\n";
        std::cerr << name << ' ' << model_tag(m, k) << ": " << e.what() << '\n';
      }
    }
  }
  if (failures > 0) std::cerr << failures << " cell(s) failed; see the status column\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Kriging-based coarsening and two-grid solves"};
  app.require_subcommand(1);
  std::map<std::string, std::string> flags;
  std::string config_path;

  const auto add_common = [&](CLI::App* sub) {
    for (const auto& [key, help] : kFlags) {
      if (key == "table" && sub->get_name() != "table") continue;
      sub->add_option_function<std::string>(
          "--" + key, [&flags, key = key](const std::string& v) { flags[key] = v; }, help);
    }
    sub->add_option("--config", config_path, "key=value file; flags override it");
  };
  add_common(app.add_subcommand("generate", "write a test problem as Matrix Market + coordinates"));
  add_common(app.add_subcommand("variogram", "empirical semivariogram and model fits"));
  add_common(app.add_subcommand("coarsen", "coarse variable selection and interpolation"));
  add_common(app.add_subcommand("solve", "full pipeline: rate and PCG iterations"));
  add_common(app.add_subcommand("table", "run the case x model x K matrix"));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitUsage;
  }

  try {
    std::map<std::string, std::string> kv;
    if (!config_path.empty()) kv = read_config_file(config_path, flag_keys());
    for (const auto& [k, v] : flags) kv[k] = v;
    const std::string cmd = app.get_subcommands().front()->get_name();
    if (cmd == "generate") return cmd_generate(kv);
    if (cmd == "variogram") return cmd_variogram(kv);
    if (cmd == "coarsen") return cmd_coarsen(kv);
    if (cmd == "solve") return cmd_solve(kv);
    return cmd_table(kv);
  } catch (const InputError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  }
}
