#include "cli.hpp"

#include <algorithm>
#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <ostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "tsqr/bias_oracle.hpp"
#include "tsqr/bootstrap.hpp"
#include "tsqr/dgp.hpp"
#include "tsqr/errors.hpp"
#include "tsqr/harness.hpp"
#include "tsqr/series_io.hpp"
#include "tsqr/sqe.hpp"
#include "tsqr/taustep.hpp"

namespace tsqr::cli {

namespace fs = std::filesystem;
using nlohmann::json;

std::uint64_t fnv1a(const std::string& bytes) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

namespace {

std::string hex64(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << v;
  return os.str();
}

std::string utc_now() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream is(s);
  while (std::getline(is, cur, sep)) out.push_back(cur);
  return out;
}

double parse_number(const std::string& s, const std::string& what) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != s.size()) throw InvalidInput("bad number '" + s + "' in " + what);
  return v;
}

json load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidInput("cannot open config '" + path + "'");
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw InvalidInput("config '" + path + "' is not valid JSON: " + e.what());
  }
  if (!j.is_object()) throw InvalidInput("config must be a JSON object");
  if (!j.contains("schema_version") || j.at("schema_version") != kSchemaVersion) {
    throw InvalidInput("config schema_version must be " + std::to_string(kSchemaVersion));
  }
  return j;
}

// Run manifest, written atomically once the outputs exist.
class Manifest {
 public:
  Manifest(std::string command, const std::vector<std::string>& args)
      : command_(std::move(command)), args_(args), start_(utc_now()),
        t0_(std::chrono::steady_clock::now()) {}

  void set_config(json config) { config_ = std::move(config); }
  void set_seed(std::uint64_t seed) { seed_ = seed; }
  void add_output(const fs::path& p) { outputs_.push_back(p.string()); }

  void write(const fs::path& dir) {
    const double wall =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0_).count();
    json m{{"schema_version", kSchemaVersion},
           {"tool_version", "0.1.0"},
           {"command", command_},
           {"arguments", args_},
           {"config", config_},
           {"config_hash", hex64(fnv1a(config_.dump()))},
           {"start_time", start_},
           {"end_time", utc_now()},
           {"wall_time_seconds", wall},
           {"outputs", outputs_}};
    if (seed_) m["seed"] = *seed_;
    io::write_file_atomic(dir / "manifest.json", m.dump(2) + "\n");
  }

 private:
  std::string command_;
  std::vector<std::string> args_;
  std::string start_;
  std::chrono::steady_clock::time_point t0_;
  json config_ = json::object();
  std::optional<std::uint64_t> seed_;
  std::vector<std::string> outputs_;
};

struct EstimationFlags {
  std::string config;
  std::optional<std::size_t> p;
  bool no_intercept = false;
  std::string tau_grid;
  std::string weight;
  std::string family;
  std::string transform;
  std::optional<double> refine_tol;
  int threads = 1;

  void attach(CLI::App* app) {
    app->add_option("--config", config, "JSON config (schema_version 1)");
    app->add_option("--p", p, "autoregressive order");
    app->add_flag("--no-intercept", no_intercept, "fit without an intercept");
    app->add_option("--tau-grid", tau_grid, "level grid as eps,step");
    app->add_option("--weight", weight, "self-weight: unit, power:k or exp_power:k");
    app->add_option("--family", family, "moment family as d0,ptilde");
    app->add_option("--transform", transform, "moment transform: algebraic or arctangent");
    app->add_option("--refine-tol", refine_tol, "golden-section stopping width");
    app->add_option("--threads", threads, "worker threads (results do not depend on it)");
  }

  // Config file first, then flag overrides.
  [[nodiscard]] taustep::TwoStepConfig resolve(json* raw) const {
    taustep::TwoStepConfig cfg;
    if (!config.empty()) {
      *raw = load_config(config);
      const json& est = raw->contains("estimation") ? raw->at("estimation") : *raw;
      cfg = est.get<taustep::TwoStepConfig>();
    }
    if (p) cfg.p = *p;
    if (no_intercept) cfg.intercept = false;
    if (!tau_grid.empty()) {
      const auto parts = split(tau_grid, ',');
      if (parts.size() != 2) throw InvalidInput("--tau-grid expects eps,step");
      cfg.grid = sqe::TauGrid::make(parse_number(parts[0], "--tau-grid"),
                                    parse_number(parts[1], "--tau-grid"));
    }
    if (!weight.empty()) cfg.weight = qreg::parse_weight_spec(weight);
    if (!family.empty()) {
      const auto parts = split(family, ',');
      if (parts.size() != 2) throw InvalidInput("--family expects d0,ptilde");
      const double d0 = parse_number(parts[0], "--family");
      const double pt = parse_number(parts[1], "--family");
      if (d0 != std::floor(d0) || pt != std::floor(pt)) {
        throw InvalidInput("--family entries must be integers");
      }
      cfg.family.d0 = static_cast<int>(d0);
      cfg.family.p_tilde = static_cast<int>(pt);
    }
    if (transform == "arctangent") {
      cfg.family.transform = taustep::Transform::arctangent;
    } else if (transform == "algebraic") {
      cfg.family.transform = taustep::Transform::algebraic;
    } else if (!transform.empty()) {
      throw InvalidInput("unknown transform '" + transform + "'");
    }
    if (refine_tol) cfg.refine_tol = *refine_tol;
    if (threads < 1) throw InvalidInput("--threads must be positive");
    cfg.path.threads = threads;
    cfg.validate();
    return cfg;
  }
};

fs::path prepare_dir(const std::string& dir) {
  fs::path out = dir.empty() ? fs::path(".") : fs::path(dir);
  fs::create_directories(out);
  return out;
}

void write_output(Manifest& m, const fs::path& path, const std::string& contents) {
  io::write_file_atomic(path, contents);
  m.add_output(path);
}

template <class Writer>
std::string render(Writer&& w) {
  std::ostringstream os;
  w(os);
  return os.str();
}

json config_json(const taustep::TwoStepConfig& cfg) {
  json j = cfg;
  j["schema_version"] = kSchemaVersion;
  return j;
}

void warn_boundary(const taustep::TwoStepEstimate& est, std::ostream& err) {
  if (est.boundary_flag) {
    err << "warning: " << (est.warning.empty() ? "tau_hat lies on the grid boundary" : est.warning)
        << "\n";
  }
}

// ---------------------------------------------------------------- simulate

struct SimulateCmd {
  std::string dgp_id = dgp::default_asymmetric_dgp();
  std::size_t n = 1000;
  std::size_t burn_in = dgp::kDefaultBurnIn;
  std::uint64_t seed = 1;
  std::string config;
  std::string output_dir = ".";

  void attach(CLI::App* app) {
    app->add_option("--dgp", dgp_id, "built-in DGP id");
    app->add_option("--n", n, "series length");
    app->add_option("--burn-in", burn_in, "discarded warm-up steps");
    app->add_option("--seed", seed, "random seed");
    app->add_option("--config", config, "JSON config with a custom \"dgp\" object");
    app->add_option("--output-dir", output_dir, "output directory");
  }

  int run(Manifest& m, std::ostream& out) {
    dgp::DgpSpec spec = dgp::find_dgp(dgp_id);
    if (!config.empty()) {
      const json raw = load_config(config);
      if (raw.contains("dgp")) spec = raw.at("dgp").get<dgp::DgpSpec>();
    }
    const auto sample = spec.simulate(n, seed, burn_in);
    const fs::path dir = prepare_dir(output_dir);
    write_output(m, dir / "series.csv",
                 render([&](std::ostream& os) { io::write_series_csv(os, sample.values); }));
    write_output(m, dir / "series.json", dgp::sidecar_json(sample).dump(2) + "\n");
    m.set_config({{"schema_version", kSchemaVersion}, {"dgp", spec}, {"n", n}, {"burn_in", burn_in}});
    m.set_seed(seed);
    m.write(dir);
    out << (dir / "series.csv").string() << "\n";
    return kExitOk;
  }
};

// ---------------------------------------------------------------- estimate

struct EstimateCmd {
  std::string input;
  std::string output_dir = ".";
  std::optional<std::uint64_t> seed;
  EstimationFlags est;

  void attach(CLI::App* app) {
    app->add_option("--input", input, "series CSV with header t,y")->required();
    app->add_option("--output-dir", output_dir, "output directory");
    app->add_option("--seed", seed, "recorded only; estimation is deterministic");
    est.attach(app);
  }

  int run(Manifest& m, std::ostream& out, std::ostream& err) {
    json raw;
    const auto cfg = est.resolve(&raw);
    const auto series = io::read_series_csv(fs::path(input));
    const auto result = taustep::two_step(series, cfg);
    auto design = std::make_shared<const qreg::LaggedDesign>(
        qreg::build_design(series, cfg.p, cfg.intercept));
    const auto path = sqe::estimate_path(*design, cfg.weight, cfg.grid, cfg.path);

    const fs::path dir = prepare_dir(output_dir);
    json j = taustep::to_json(result);
    j["config"] = cfg;
    write_output(m, dir / "estimate.json", j.dump(2) + "\n");
    write_output(m, dir / "objective_curve.csv", render([&](std::ostream& os) {
                   taustep::write_objective_csv(os, result.objective_curve);
                 }));
    write_output(m, dir / "sqe_path.csv",
                 render([&](std::ostream& os) { sqe::write_path_csv(os, path); }));
    json c = config_json(cfg);
    c["input"] = input;
    m.set_config(c);
    if (seed) m.set_seed(*seed);
    m.write(dir);
    warn_boundary(result, err);
    out << "tau_hat " << io::format_double(result.tau_hat) << "\n";
    return kExitOk;
  }
};

// ---------------------------------------------------------------- bootstrap

struct BootstrapCmd {
  std::string input;
  std::string output_dir = ".";
  std::uint64_t seed = 1;
  std::size_t J = 499;
  std::string method = "normal";
  bool no_reuse_grid = false;
  std::optional<double> tau1;
  EstimationFlags est;

  void attach(CLI::App* app) {
    app->add_option("--input", input, "series CSV with header t,y")->required();
    app->add_option("--output-dir", output_dir, "output directory");
    app->add_option("--seed", seed, "multiplier seed");
    app->add_option("--boot-J", J, "bootstrap replications");
    app->add_option("--method", method, "interval method: normal or percentile");
    app->add_flag("--no-reuse-grid", no_reuse_grid, "skip golden-section refinement in replications");
    app->add_option("--tau1", tau1, "also test H0: tau0 = tau1");
    est.attach(app);
  }

  int run(Manifest& m, std::ostream& out, std::ostream& err) {
    json raw;
    const auto cfg = est.resolve(&raw);
    boot::BootstrapConfig bc;
    bc.replications = J;
    bc.seed = seed;
    bc.threads = cfg.path.threads;
    bc.reuse_grid = !no_reuse_grid;
    if (method == "normal") {
      bc.method = boot::CiMethod::normal;
    } else if (method == "percentile") {
      bc.method = boot::CiMethod::percentile;
    } else {
      throw InvalidInput("unknown interval method '" + method + "'");
    }
    std::optional<boot::HypothesisSpec> hyp;
    if (raw.contains("hypothesis")) {
      const auto rows = raw.at("hypothesis").at("A").get<std::vector<std::vector<double>>>();
      const auto a = raw.at("hypothesis").at("a").get<std::vector<double>>();
      boot::HypothesisSpec h;
      const std::size_t cols = rows.empty() ? 0 : rows.front().size();
      h.A.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(cols));
      for (std::size_t r = 0; r < rows.size(); ++r) {
        if (rows[r].size() != cols) throw InvalidInput("ragged hypothesis matrix");
        for (std::size_t c = 0; c < cols; ++c) {
          h.A(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
        }
      }
      h.a = Eigen::Map<const Eigen::VectorXd>(a.data(), static_cast<Eigen::Index>(a.size()));
      hyp = h;
    }

    const auto series = io::read_series_csv(fs::path(input));
    const auto result = taustep::two_step(series, cfg);
    const auto summary = boot::bootstrap_two_step(series, result, cfg, bc);

    json bj = boot::to_json(summary);
    const std::size_t n = summary.n;
    if (hyp) {
      const auto t = boot::wald_theta(result.theta_hat, summary.Gamma1_hat, *hyp, n);
      bj["wald_theta"] = {{"statistic", t.statistic}, {"p_value", t.p_value}, {"df", t.df}};
    }
    if (tau1) {
      const auto t = boot::wald_tau(result.tau_hat, summary.gamma1_sq_hat, *tau1, n);
      bj["wald_tau"] = {{"tau1", *tau1}, {"statistic", t.statistic}, {"p_value", t.p_value}, {"df", t.df}};
    }
    if (!summary.warning.empty()) err << "warning: " << summary.warning << "\n";
    for (std::size_t i = 0; i < summary.skipped.size(); ++i) {
      err << "warning: bootstrap replication " << summary.skipped[i]
          << " skipped: " << summary.skip_reasons[i] << "\n";
    }

    const fs::path dir = prepare_dir(output_dir);
    json ej = taustep::to_json(result);
    ej["config"] = cfg;
    write_output(m, dir / "estimate.json", ej.dump(2) + "\n");
    write_output(m, dir / "bootstrap.json", bj.dump(2) + "\n");
    write_output(m, dir / "bootstrap_draws.csv",
                 render([&](std::ostream& os) { boot::write_draws_csv(os, summary); }));
    json c = config_json(cfg);
    c["input"] = input;
    c["bootstrap"] = {{"replications", J}, {"method", method}, {"reuse_grid", bc.reuse_grid}};
    if (tau1) c["tau1"] = *tau1;
    if (raw.contains("hypothesis")) c["hypothesis"] = raw.at("hypothesis");
    m.set_config(c);
    m.set_seed(seed);
    m.write(dir);
    warn_boundary(result, err);
    out << "gamma1_sq_hat " << io::format_double(summary.gamma1_sq_hat) << "\n";
    return kExitOk;
  }
};

// ---------------------------------------------------------------- oracle

struct OracleCmd {
  std::string dgp_id = dgp::default_asymmetric_dgp();
  std::string output_dir = ".";
  std::uint64_t seed = 1;
  std::size_t mc_paths = 200000;
  std::size_t s_points = 11;
  std::string tau_grid = "0.05,0.05";
  std::string weight;
  std::string family;
  int threads = 1;
  bool skip_identification = false;

  void attach(CLI::App* app) {
    app->add_option("--dgp", dgp_id, "built-in DGP id");
    app->add_option("--output-dir", output_dir, "output directory");
    app->add_option("--seed", seed, "Monte Carlo seed");
    app->add_option("--mc-paths", mc_paths, "stationary draws per s point");
    app->add_option("--s-points", s_points, "equispaced points on [0, 1]");
    app->add_option("--tau-grid", tau_grid, "bias-curve grid as eps,step");
    app->add_option("--weight", weight, "self-weight: unit, power:k or exp_power:k");
    app->add_option("--family", family, "moment family as d0,ptilde");
    app->add_option("--threads", threads, "worker threads (results do not depend on it)");
    app->add_flag("--skip-identification", skip_identification, "omit the identification scan");
  }

  int run(Manifest& m, std::ostream& out) {
    const auto& spec = dgp::find_dgp(dgp_id);
    const qreg::WeightSpec w = weight.empty() ? qreg::WeightSpec::power(2.0) : qreg::parse_weight_spec(weight);
    const auto model = oracle::ParametricNoiseModel::from_dgp(spec, w);
    oracle::OracleConfig oc;
    oc.mc_paths = mc_paths;
    oc.seed = seed;
    oc.s_grid = oracle::OracleConfig::equispaced(s_points);
    oc.threads = threads;
    const auto parts = split(tau_grid, ',');
    if (parts.size() != 2) throw InvalidInput("--tau-grid expects eps,step");
    const auto grid = sqe::TauGrid::make(parse_number(parts[0], "--tau-grid"),
                                         parse_number(parts[1], "--tau-grid"));
    taustep::MomentFamilySpec fam;
    if (!family.empty()) {
      const auto fp = split(family, ',');
      if (fp.size() != 2) throw InvalidInput("--family expects d0,ptilde");
      fam.d0 = static_cast<int>(parse_number(fp[0], "--family"));
      fam.p_tilde = static_cast<int>(parse_number(fp[1], "--family"));
    }

    const oracle::BiasOracle orc(model, oc);
    const auto curve = orc.bias_curve(grid);
    const auto av = orc.asymptotic_variances(fam);
    json j{{"dgp", spec.id},
           {"tau0", orc.tau0()},
           {"bias_curve", oracle::to_json(curve)},
           {"asymptotic_variances", oracle::to_json(av)}};
    if (!skip_identification) j["identification"] = oracle::to_json(orc.verify_identification(fam, grid));

    const fs::path dir = prepare_dir(output_dir);
    write_output(m, dir / "bias_curve.csv",
                 render([&](std::ostream& os) { oracle::write_bias_curve_csv(os, curve); }));
    write_output(m, dir / "oracle.json", j.dump(2) + "\n");
    m.set_config({{"schema_version", kSchemaVersion},
                  {"dgp", spec},
                  {"weight", w},
                  {"mc_paths", mc_paths},
                  {"s_points", s_points},
                  {"tau_grid", tau_grid},
                  {"family", {{"d0", fam.d0}, {"p_tilde", fam.p_tilde}}}});
    m.set_seed(seed);
    m.write(dir);
    out << "gamma1_sq " << io::format_double(av.gamma1_sq) << "\n";
    return kExitOk;
  }
};

// ---------------------------------------------------------------- montecarlo

struct MonteCarloCmd {
  std::string config;
  std::string output_dir = ".";
  std::string dgps;
  std::string sizes;
  std::optional<std::size_t> reps;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> J;
  std::optional<int> threads;

  void attach(CLI::App* app) {
    app->add_option("--config", config, "experiment JSON (schema_version 1)");
    app->add_option("--output-dir", output_dir, "output directory");
    app->add_option("--dgp", dgps, "comma-separated DGP ids");
    app->add_option("--n", sizes, "comma-separated sample sizes");
    app->add_option("--reps", reps, "replications per cell");
    app->add_option("--seed", seed, "master seed");
    app->add_option("--boot-J", J, "enable the bootstrap with J replications");
    app->add_option("--threads", threads, "worker threads (results do not depend on it)");
  }

  int run(Manifest& m, std::ostream& out) {
    harness::ExperimentSpec spec;
    if (!config.empty()) spec = load_config(config).get<harness::ExperimentSpec>();
    if (!dgps.empty()) spec.dgps = split(dgps, ',');
    if (!sizes.empty()) {
      spec.sizes.clear();
      for (const auto& s : split(sizes, ',')) {
        const double v = parse_number(s, "--n");
        if (v < 1 || v != std::floor(v)) throw InvalidInput("--n entries must be positive integers");
        spec.sizes.push_back(static_cast<std::size_t>(v));
      }
    }
    if (reps) spec.replications = *reps;
    if (seed) spec.master_seed = *seed;
    if (J) {
      boot::BootstrapConfig bc = spec.bootstrap.value_or(boot::BootstrapConfig{});
      bc.replications = *J;
      spec.bootstrap = bc;
    }
    if (threads) spec.threads = *threads;
    if (spec.threads < 1) throw InvalidInput("--threads must be positive");

    const auto table = harness::run_experiment(spec);
    const fs::path dir = prepare_dir(output_dir);
    write_output(m, dir / "metrics.csv",
                 render([&](std::ostream& os) { harness::write_metrics_csv(os, table); }));
    write_output(m, dir / "rates.csv",
                 render([&](std::ostream& os) { harness::write_rates_csv(os, table); }));
    write_output(m, dir / "raw.csv",
                 render([&](std::ostream& os) { harness::write_raw_csv(os, table); }));
    json c = spec;
    c["schema_version"] = kSchemaVersion;
    json seeds = json::array();
    for (const auto& r : table.raw) seeds.push_back(r.seed);
    c["replication_seeds"] = seeds;
    m.set_config(c);
    m.set_seed(spec.master_seed);
    m.write(dir);
    out << (dir / "metrics.csv").string() << "\n";
    return kExitOk;
  }
};

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Two-step self-weighted quantile regression for heavy-tailed AR models"};
  app.name("tsqr");
  app.require_subcommand(1);
  SimulateCmd sim;
  EstimateCmd est;
  BootstrapCmd bs;
  OracleCmd orc;
  MonteCarloCmd mc;
  auto* c_sim = app.add_subcommand("simulate", "simulate a series from a DGP");
  auto* c_est = app.add_subcommand("estimate", "two-step estimate of (tau0, theta)");
  auto* c_bs = app.add_subcommand("bootstrap", "random-weighting bootstrap and Wald tests");
  auto* c_orc = app.add_subcommand("oracle", "population bias curve and asymptotic variances");
  auto* c_mc = app.add_subcommand("montecarlo", "Monte Carlo experiment tables");
  sim.attach(c_sim);
  est.attach(c_est);
  bs.attach(c_bs);
  orc.attach(c_orc);
  mc.attach(c_mc);

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kExitInput;
  }

  try {
    if (c_sim->parsed()) {
      Manifest m("simulate", args);
      return sim.run(m, out);
    }
    if (c_est->parsed()) {
      Manifest m("estimate", args);
      return est.run(m, out, err);
    }
    if (c_bs->parsed()) {
      Manifest m("bootstrap", args);
      return bs.run(m, out, err);
    }
    if (c_orc->parsed()) {
      Manifest m("oracle", args);
      return orc.run(m, out);
    }
    Manifest m("montecarlo", args);
    return mc.run(m, out);
  } catch (const io::CsvError& e) {
    err << "error: " << e.what() << "\n";
    return kExitInput;
  } catch (const InvalidInput& e) {
    err << "error: " << e.what() << "\n";
    return kExitInput;
  } catch (const RangeError& e) {
    err << "error: " << e.what() << "\n";
    return kExitInput;
  } catch (const json::exception& e) {
    err << "error: config: " << e.what() << "\n";
    return kExitInput;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return kExitInput;
  } catch (const NumericError& e) {
    err << "error: numeric failure: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitNumeric;
  }
}

}  // namespace tsqr::cli
