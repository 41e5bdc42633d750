// mnarfuse command-line interface.
//
// Exit codes: 0 success, 1 data or convergence failure, 2 usage error.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "mnarfuse/mnarfuse.hpp"

namespace fs = std::filesystem;
using namespace mnarfuse;

namespace {

constexpr int kExitData = 1;
constexpr int kExitUsage = 2;

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

fs::path output_dir(const std::string& flag) {
  if (!flag.empty()) return flag;
  if (const char* env = std::getenv("MNARFUSE_OUT_DIR"); env && *env) return env;
  return ".";
}

fs::path resolve(const fs::path& dir, const std::string& explicit_path, const std::string& fallback_name) {
  fs::path p = explicit_path.empty() ? dir / fallback_name : fs::path(explicit_path);
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  return p;
}

std::ofstream open_out(const fs::path& p) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw DataError("cannot write " + p.string());
  return out;
}

std::ifstream open_in(const std::string& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw UsageError("cannot read " + p);
  return in;
}

std::string join(const std::vector<std::string>& v) {
  std::string out;
  for (const auto& s : v) out += (out.empty() ? "" : ",") + s;
  return out;
}

SchemaMap read_schema_map(const std::string& path) {
  auto in = open_in(path);
  SchemaMap map;
  bool y_kind_set = false;
  for (const auto& item : CLI::ConfigINI().from_config(in)) {
    const auto& key = item.name;
    if (key == "++" || key == "--") continue;
    const std::string value = join(item.inputs);
    if (key == "domain_column") map.domain_column = value;
    else if (key == "primary_value") map.primary_value = value;
    else if (key == "auxiliary_value") map.auxiliary_value = value;
    else if (key == "r_column") map.r_column = value;
    else if (key == "r_observed_value") map.r_observed_value = value;
    else if (key == "x_columns") map.x_columns = item.inputs;
    else if (key == "m_column") map.m_column = value;
    else if (key == "m_levels") map.m_levels = item.inputs;
    else if (key == "y_column") map.y_column = value;
    else if (key == "y_false_value") map.y_false_value = value;
    else if (key == "y_true_value") map.y_true_value = value;
    else if (key == "missing_tokens") {
      map.missing_tokens = item.inputs;
      map.missing_tokens.push_back("");
    } else if (key == "y_kind") {
      if (value == "binary") map.y_kind = YKind::Binary;
      else if (value == "numeric") map.y_kind = YKind::Numeric;
      else throw UsageError("schema map: y_kind must be binary or numeric");
      y_kind_set = true;
    } else {
      throw UsageError("schema map: unknown key '" + key + "'");
    }
  }
  if (!y_kind_set && !map.y_true_value.empty()) map.y_kind = YKind::Binary;
  return map;
}

void print_ingest_summary(std::ostream& out, const IngestSummary& s) {
  out << std::fixed << std::setprecision(4);
  out << "primary rows     " << s.n_primary << "  missing rate " << s.primary_missing_rate << '\n';
  out << "auxiliary rows   " << s.n_auxiliary << "  missing rate " << s.auxiliary_missing_rate << '\n';
  out << "dropped rows     " << s.dropped_rows << '\n';
  out << std::defaultfloat;
}

PooledDataset load_dataset(const std::string& data, const std::string& schema_map, bool verbose) {
  auto in = open_in(data);
  if (!schema_map.empty()) {
    auto res = ingest_external(in, read_schema_map(schema_map));
    if (verbose) print_ingest_summary(std::cerr, res.summary);
    return std::move(res.dataset);
  }
  auto ds = read_csv(in);
  const auto violations = validate(ds);
  if (!violations.empty()) {
    std::ostringstream msg;
    msg << violations.size() << " validation violation(s)";
    for (const auto& v : violations) msg << "\n  row " << v.row << ": " << v.rule;
    throw DataError(msg.str());
  }
  return ds;
}

std::size_t default_workers() { return std::max(1u, std::thread::hardware_concurrency()); }

// ---------------------------------------------------------------------------

struct SimulateArgs {
  int model = 1;
  std::string setting = "T";
  std::size_t n = 2000;
  std::uint64_t seed = 0;
  std::string out, truth, out_dir;
};

int run_simulate(const SimulateArgs& a) {
  const auto s = parse_setting(a.setting);
  SimulatedData sim = a.model == 1 ? generate_model1(Model1Design::make(s, a.n), a.seed)
                                   : generate_model2(Model2Design::make(s, a.n), a.seed);
  const auto dir = output_dir(a.out_dir);
  const std::string stem = "model" + std::to_string(a.model) + "_" + a.setting + "_n" + std::to_string(a.n) + "_seed" +
                           std::to_string(a.seed);
  const auto data_path = resolve(dir, a.out, stem + ".csv");
  fs::path truth_path = a.truth.empty() ? data_path.parent_path() / (data_path.stem().string() + "_truth.csv") : fs::path(a.truth);
  {
    auto out = open_out(data_path);
    write_csv(out, sim.dataset);
  }
  {
    auto out = open_out(truth_path);
    write_truth_csv(out, sim);
  }
  std::cout << "wrote " << data_path.string() << " (" << sim.dataset.size() << " rows)\n"
            << "wrote " << truth_path.string() << '\n';
  return 0;
}

// ---------------------------------------------------------------------------

struct EstimateArgs {
  std::string data, schema_map, model = "1", report, out_dir;
  std::string propensity_basis, h_basis, aux_basis, baseline_basis, or_interactions, mar_basis, outcome_basis;
  std::optional<double> fixed_gamma;
  double tol = 1e-8;
  int max_iter = 100;
  double w_max = 1e6;
  std::uint64_t seed = 0;
  std::size_t bootstrap = 0;
  std::uint64_t boot_seed = 0;
  bool unstratified = false;
  double ci_level = 0.95;
  std::size_t workers = 0;
};

NamedEstimator build_estimator(const EstimateArgs& a, const VariableSchema& schema) {
  EstimatorConfig cfg;
  cfg.solver.tol = a.tol;
  cfg.solver.max_iter = a.max_iter;
  cfg.solver.seed = a.seed;
  cfg.weights.w_max = a.w_max;
  if (a.model == "1") {
    auto spec = Model1Spec::defaults(schema);
    if (!a.propensity_basis.empty()) spec.propensity_basis = BasisSpec::parse(a.propensity_basis);
    if (!a.h_basis.empty()) spec.h_basis = BasisSpec::parse(a.h_basis);
    if (!a.aux_basis.empty()) spec.aux_regression_basis = BasisSpec::parse(a.aux_basis);
    return {"ipw_model1", [spec, cfg](const PooledDataset& d) { return estimate_model1(d, spec, cfg); }};
  }
  if (a.model == "2") {
    auto spec = Model2Spec::defaults(schema);
    if (!a.baseline_basis.empty()) spec.baseline_basis = BasisSpec::parse(a.baseline_basis);
    if (!a.h_basis.empty()) spec.h_basis = BasisSpec::parse(a.h_basis);
    if (!a.aux_basis.empty()) spec.aux_regression_basis = BasisSpec::parse(a.aux_basis);
    if (!a.or_interactions.empty()) {
      for (const auto& t : BasisSpec::parse("1," + a.or_interactions).terms()) {
        if (!t.is_constant()) spec.or_model.x_interactions.push_back(t);
      }
    }
    spec.fixed_gamma = a.fixed_gamma;
    return {"ipw_model2", [spec, cfg](const PooledDataset& d) { return estimate_model2(d, spec, cfg); }};
  }
  if (a.model == "plugin") {
    auto spec = PluginSpec::defaults(schema);
    if (!a.outcome_basis.empty()) spec.outcome_basis = BasisSpec::parse(a.outcome_basis);
    if (!a.aux_basis.empty()) spec.aux_regression_basis = BasisSpec::parse(a.aux_basis);
    return {"plugin_model1", [spec](const PooledDataset& d) {
              EstimateReport r;
              r.estimator = "plugin_model1";
              r.beta_hat = identify_beta_model1_plugin(d, spec);
              return r;
            }};
  }
  if (a.model == "mar") {
    const auto basis = a.mar_basis.empty() ? BasisSpec::polynomial_x(schema.x_dim(), 1) : BasisSpec::parse(a.mar_basis);
    return {"mar", [basis](const PooledDataset& d) { return mar_estimate(d, basis); }};
  }
  if (a.model == "mcar") return standard_estimator("mcar");
  throw UsageError("--model must be 1, 2, plugin, mar or mcar");
}

int run_estimate(const EstimateArgs& a) {
  const auto ds = load_dataset(a.data, a.schema_map, true);
  const auto est = build_estimator(a, ds.schema);
  auto rep = est.run(ds);
  if (a.bootstrap > 0) {
    BootstrapConfig bc;
    bc.k = a.bootstrap;
    bc.seed = a.boot_seed;
    bc.stratified_by_domain = !a.unstratified;
    bc.ci_level = a.ci_level;
    bc.workers = a.workers ? a.workers : default_workers();
    rep.ci = bootstrap_ci(ds, est, bc).ci;
  }
  const auto path = resolve(output_dir(a.out_dir), a.report, "estimate_" + est.name + ".json");
  {
    auto out = open_out(path);
    out << to_json(rep).dump(2) << '\n';
  }
  const auto& d = rep.diagnostics;
  std::cout << std::left << std::setw(12) << "estimator" << rep.estimator << '\n'
            << std::setw(12) << "beta_hat" << std::setprecision(6) << rep.beta_hat << '\n';
  if (rep.ci) {
    std::cout << std::setw(12) << "ci" << '[' << rep.ci->lo << ", " << rep.ci->hi << "]  width " << rep.ci->width
              << "  level " << rep.ci->level << "  failed " << rep.ci->n_failed << '/' << rep.ci->resamples << '\n';
  }
  for (const auto& p : rep.nuisance) std::cout << std::setw(12) << p.name << p.value << '\n';
  std::cout << std::setw(12) << "n_primary" << d.n_primary << " (" << d.n_primary_complete << " complete)\n"
            << std::setw(12) << "n_auxiliary" << d.n_auxiliary << " (" << d.n_auxiliary_complete << " complete)\n";
  if (rep.solver) std::cout << std::setw(12) << "solver" << to_string(rep.solver->status) << '\n';
  for (const auto& w : d.warnings) std::cout << "warning: " << w << '\n';
  std::cout << "report      " << path.string() << '\n';
  return 0;
}

// ---------------------------------------------------------------------------

struct ReplicateArgs {
  int model = 1;
  std::string setting = "T";
  std::vector<std::size_t> n{500, 1000, 2000};
  std::size_t reps = 1000;
  std::uint64_t seed = 0;
  std::size_t workers = 0;
  std::vector<std::string> estimators;
  std::string out, long_out, out_dir;
};

int run_replicate(const ReplicateArgs& a) {
  const auto s = parse_setting(a.setting);
  const auto design = a.model == 1 ? replication_design(Model1Design::make(s, 0)) : replication_design(Model2Design::make(s, 0));
  std::vector<NamedEstimator> ests;
  const auto names = a.estimators.empty() ? std::vector<std::string>{"ipw_model" + std::to_string(a.model), "mar"} : a.estimators;
  for (const auto& n : names) {
    try {
      ests.push_back(standard_estimator(n));
    } catch (const PreconditionError& e) {
      throw UsageError(e.what());
    }
  }
  ReplicationConfig rc;
  rc.n_values = a.n;
  rc.n_reps = a.reps;
  rc.seed = a.seed;
  rc.workers = a.workers ? a.workers : default_workers();
  const auto rep = replicate(design, ests, rc);
  const auto dir = output_dir(a.out_dir);
  const std::string stem = "replicate_" + design.name + "_" + design.setting;
  const auto table = resolve(dir, a.out, stem + ".csv");
  const auto longp = resolve(dir, a.long_out, stem + "_long.csv");
  {
    auto out = open_out(table);
    write_replication_csv(out, rep);
  }
  {
    auto out = open_out(longp);
    write_long_csv(out, rep);
  }
  std::cout << "true beta " << std::setprecision(6) << design.beta_true << '\n';
  write_replication_text(std::cout, rep);
  std::cout << "wrote " << table.string() << "\nwrote " << longp.string() << '\n';
  return 0;
}

// ---------------------------------------------------------------------------

struct OracleArgs {
  std::size_t laws = 100;
  std::uint64_t seed = 1;
  std::string law, model = "2";
};

int run_oracle(const OracleArgs& a) {
  BatteryReport rep;
  if (!a.law.empty()) {
    if (a.model != "1" && a.model != "2") throw UsageError("--model must be 1 or 2 with --law");
    auto in = open_in(a.law);
    const auto law = read_law(in);
    try {
      law.check();
    } catch (const PreconditionError& e) {
      throw DataError(std::string("invalid law: ") + e.what());
    }
    check_law(rep, law, a.model, 0, 0);
    rep.laws = 1;
    const auto as = check_assumptions(law);
    std::cout << "assumptions: aux_mar=" << as.aux_mar.holds << " domain_selection=" << as.domain_selection.holds
              << " outcome_ignorable=" << as.outcome_ignorable.holds << " shadow=" << as.shadow.holds
              << " completeness=" << as.completeness.holds << '\n';
  } else {
    rep = run_oracle_battery(a.laws, a.seed);
  }
  std::cout << std::setprecision(3) << "laws " << rep.laws << "  checks " << rep.checks << '\n'
            << "max |model 1 - truth|     " << rep.max_model1_error << '\n'
            << "max |model 2 - truth|     " << rep.max_model2_error << '\n'
            << "max identity residual     " << rep.max_identity_residual << '\n'
            << "max bridge residual       " << rep.max_bridge_residual << '\n'
            << "max odds-ratio error      " << rep.max_odds_ratio_error << '\n';
  for (const auto& f : rep.failures) {
    std::cout << "FAIL law ";
    if (a.law.empty()) std::cout << f.law_index << " seed " << f.law_seed;
    else std::cout << a.law;
    std::cout << " model " << f.model << " check " << f.check
              << " value " << f.value << " > " << f.tolerance << '\n';
  }
  std::cout << (rep.ok() ? "ok\n" : "failed\n");
  return rep.ok() ? 0 : kExitData;
}

// ---------------------------------------------------------------------------

struct IngestArgs {
  std::string data, schema_map, out, out_dir;
};

int run_ingest(const IngestArgs& a) {
  auto in = open_in(a.data);
  const auto res = ingest_external(in, read_schema_map(a.schema_map));
  print_ingest_summary(std::cout, res.summary);
  const auto path = resolve(output_dir(a.out_dir), a.out, fs::path(a.data).stem().string() + "_pooled.csv");
  auto out = open_out(path);
  write_csv(out, res.dataset);
  std::cout << "wrote " << path.string() << " (" << res.dataset.size() << " rows)\n";
  return 0;
}

struct FixtureArgs {
  std::size_t n = 6000;
  std::uint64_t seed = 0;
  std::string out_dir;
};

int run_fixture(const FixtureArgs& a) {
  SurveillanceFixtureDesign d;
  d.n = a.n;
  const auto fx = generate_surveillance_fixture(d, a.seed);
  const auto dir = output_dir(a.out_dir);
  fs::create_directories(dir);
  open_out(dir / "surveillance.csv") << fx.csv;
  open_out(dir / "surveillance_schema.ini") << fx.schema_map;
  nlohmann::json truth = {{"beta", fx.truth.beta},
                          {"primary_missing_rate", fx.truth.primary_missing_rate},
                          {"auxiliary_missing_rate", fx.truth.auxiliary_missing_rate},
                          {"n_primary", fx.truth.n_primary},
                          {"n_auxiliary", fx.truth.n_auxiliary},
                          {"primary_missing", fx.truth.primary_missing},
                          {"auxiliary_missing", fx.truth.auxiliary_missing},
                          {"seed", a.seed}};
  open_out(dir / "surveillance_truth.json") << truth.dump(2) << '\n';
  std::cout << "wrote " << (dir / "surveillance.csv").string() << ", surveillance_schema.ini, surveillance_truth.json\n"
            << "true beta " << std::setprecision(6) << fx.truth.beta << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Mean estimation for an outcome missing not at random, fused with an auxiliary MAR domain"};
  app.set_config("--config", "", "INI file; [subcommand] sections hold option defaults, flags win");
  app.require_subcommand(1);

  SimulateArgs sim;
  auto* c_sim = app.add_subcommand("simulate", "draw a synthetic pooled dataset and its truth sidecar");
  c_sim->add_option("--model", sim.model, "design: 1 or 2")->required()->check(CLI::IsMember({1, 2}));
  c_sim->add_option("--setting", sim.setting, "T (correct working model) or F (misspecified)")
      ->check(CLI::IsMember({"T", "F"}))->capture_default_str();
  c_sim->add_option("--n", sim.n, "total units")->check(CLI::PositiveNumber)->capture_default_str();
  c_sim->add_option("--seed", sim.seed, "64-bit seed")->capture_default_str();
  c_sim->add_option("--out", sim.out, "dataset CSV path");
  c_sim->add_option("--truth", sim.truth, "truth sidecar path (default <out stem>_truth.csv)");
  c_sim->add_option("--out-dir", sim.out_dir, "output directory (default $MNARFUSE_OUT_DIR or .)");

  EstimateArgs est;
  auto* c_est = app.add_subcommand("estimate", "estimate E[Y | G=1] from a pooled dataset");
  c_est->add_option("--data", est.data, "pooled CSV")->required();
  c_est->add_option("--schema-map", est.schema_map, "INI column map for external extracts");
  c_est->add_option("--model", est.model, "1, 2, plugin, mar or mcar")
      ->check(CLI::IsMember({"1", "2", "plugin", "mar", "mcar"}))->capture_default_str();
  c_est->add_option("--report", est.report, "JSON report path");
  c_est->add_option("--out-dir", est.out_dir, "output directory");
  c_est->add_option("--propensity-basis", est.propensity_basis, "model 1 propensity terms, e.g. 1,x,m");
  c_est->add_option("--h-basis", est.h_basis, "moment functions h(X,M)");
  c_est->add_option("--aux-basis", est.aux_basis, "auxiliary regression terms in X");
  c_est->add_option("--baseline-basis", est.baseline_basis, "model 2 baseline propensity terms in X");
  c_est->add_option("--or-interactions", est.or_interactions, "model 2 odds-ratio slope terms in X besides gamma");
  c_est->add_option("--fixed-gamma", est.fixed_gamma, "hold gamma fixed (model 2)");
  c_est->add_option("--mar-basis", est.mar_basis, "regression terms for the MAR baseline");
  c_est->add_option("--outcome-basis", est.outcome_basis, "outcome regression terms for the plug-in");
  c_est->add_option("--tol", est.tol, "solver tolerance")->check(CLI::PositiveNumber)->capture_default_str();
  c_est->add_option("--max-iter", est.max_iter, "solver iterations per start")->check(CLI::PositiveNumber);
  c_est->add_option("--w-max", est.w_max, "weight cap")->check(CLI::Range(1.0 + 1e-9, 1e300));
  c_est->add_option("--seed", est.seed, "solver restart seed");
  c_est->add_option("--bootstrap", est.bootstrap, "bootstrap resamples (0 = none)");
  c_est->add_option("--boot-seed", est.boot_seed, "bootstrap seed");
  c_est->add_flag("--unstratified", est.unstratified, "resample the pooled rows rather than within domains");
  c_est->add_option("--ci-level", est.ci_level, "interval level")->check(CLI::Range(0.5, 0.999999));
  c_est->add_option("--workers", est.workers, "bootstrap threads (0 = hardware)");

  ReplicateArgs rep;
  auto* c_rep = app.add_subcommand("replicate", "Monte Carlo bias/variance table for a design");
  c_rep->add_option("--model", rep.model, "design: 1 or 2")->required()->check(CLI::IsMember({1, 2}));
  c_rep->add_option("--setting", rep.setting, "T or F")->check(CLI::IsMember({"T", "F"}));
  c_rep->add_option("--n", rep.n, "sample sizes")->check(CLI::PositiveNumber)->delimiter(',');
  c_rep->add_option("--reps", rep.reps, "replicates per sample size");
  c_rep->add_option("--seed", rep.seed, "master seed");
  c_rep->add_option("--workers", rep.workers, "threads (0 = hardware)");
  c_rep->add_option("--estimators", rep.estimators, "ipw_model1, ipw_model2, plugin_model1, mar, mcar")->delimiter(',');
  c_rep->add_option("--out", rep.out, "summary CSV path");
  c_rep->add_option("--long", rep.long_out, "per-replicate CSV path");
  c_rep->add_option("--out-dir", rep.out_dir, "output directory");

  OracleArgs orc;
  auto* c_orc = app.add_subcommand("oracle-check", "exact identification checks on discrete laws");
  c_orc->add_option("--laws", orc.laws, "random laws per model")->check(CLI::PositiveNumber);
  c_orc->add_option("--seed", orc.seed, "battery seed");
  c_orc->add_option("--law", orc.law, "check one law file (g,x,m,y,r,probability) instead");
  c_orc->add_option("--model", orc.model, "assumption set for --law: 1 or 2");

  IngestArgs ing;
  auto* c_ing = app.add_subcommand("ingest", "map an external extract onto the pooled layout");
  c_ing->add_option("--data", ing.data, "external CSV")->required();
  c_ing->add_option("--schema-map", ing.schema_map, "INI column map")->required();
  c_ing->add_option("--out", ing.out, "pooled CSV path");
  c_ing->add_option("--out-dir", ing.out_dir, "output directory");

  FixtureArgs fix;
  auto* c_fix = app.add_subcommand("fixture", "write a synthetic surveillance-style extract with known truth");
  c_fix->add_option("--n", fix.n, "rows")->check(CLI::PositiveNumber);
  c_fix->add_option("--seed", fix.seed, "seed");
  c_fix->add_option("--out-dir", fix.out_dir, "output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitUsage;
  }

  try {
    if (c_sim->parsed()) return run_simulate(sim);
    if (c_est->parsed()) return run_estimate(est);
    if (c_rep->parsed()) return run_replicate(rep);
    if (c_orc->parsed()) return run_oracle(orc);
    if (c_ing->parsed()) return run_ingest(ing);
    if (c_fix->parsed()) return run_fixture(fix);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const PreconditionError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const SolverError& e) {
    std::cerr << "error: " << e.what() << '\n';
    if (!e.result().diagnostics.empty()) std::cerr << "  " << e.result().diagnostics << '\n';
    return kExitData;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitData;
  }
  return kExitUsage;
}
