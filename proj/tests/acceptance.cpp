// Acceptance suite: one PASS/FAIL line per criterion 1-11.
//
//   acceptance [--threads N] [--only 3,5,...]
//
// Exit status is the number of failed criteria.

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <iomanip>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "oracles.hpp"
#include "tsqr/bias_oracle.hpp"
#include "tsqr/bootstrap.hpp"
#include "tsqr/dgp.hpp"
#include "tsqr/harness.hpp"
#include "tsqr/qreg.hpp"
#include "tsqr/rng.hpp"
#include "tsqr/series_io.hpp"
#include "tsqr/taustep.hpp"

using namespace tsqr;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

int g_threads = 1;

// Estimation grid of criteria 5 to 8; the library default grid is reported alongside.
sqe::TauGrid acceptance_grid() { return sqe::TauGrid::make(0.1, 0.01); }

std::string fmt(double v, int prec = 4) {
  std::ostringstream os;
  os << std::setprecision(prec) << v;
  return os.str();
}

void info(const std::string& s) { std::cout << "    " << s << std::endl; }

bool within(double v, double lo, double hi) { return v >= lo && v <= hi; }

std::string sha(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

oracle::OracleConfig oracle_config() {
  oracle::OracleConfig c;
  c.threads = g_threads;
  return c;
}

// ------------------------------------------------------------------ 1

Outcome qr_oracle() {
  std::mt19937_64 gen(2024);
  double worst = 0.0;
  const auto t0 = std::chrono::steady_clock::now();
  for (int r = 0; r < 200; ++r) {
    const auto inst = oracles::random_instance(gen);
    const auto sol = qreg::solve_wqr(inst.design, inst.weights, inst.tau);
    worst = std::max(worst, std::abs(sol.objective - oracles::brute_force_qr(inst.design, inst.weights, inst.tau)));
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return {worst <= 1e-8 && secs < 60.0,
          "max |objective - brute force| = " + fmt(worst, 3) + " over 200 instances, " + fmt(secs, 3) + " s"};
}

// ------------------------------------------------------------------ 3, 4

Outcome bias_curve_agreement() {
  harness::ExperimentSpec spec;
  spec.dgps = {"asym_arch"};
  spec.sizes = {5000};
  spec.replications = 200;
  spec.fixed_taus = {0.3, 0.7};
  spec.master_seed = 301;
  spec.threads = g_threads;
  const auto table = harness::run_experiment(spec);
  const auto model = oracle::ParametricNoiseModel::from_dgp(dgp::find_dgp("asym_arch"), spec.estimation.weight);
  const oracle::BiasOracle orc(model, oracle_config());
  bool pass = true;
  double worst = 0.0;
  for (double tau : spec.fixed_taus) {
    const auto sol = orc.solve_bias(tau);
    const std::array<std::string, 2> names{"mu", "phi1"};
    for (std::size_t j = 0; j < 2; ++j) {
      std::ostringstream label;
      label << names[j] << "@" << tau;
      const auto& row = table.row("asym_arch", 5000, label.str());
      const double gap = std::abs(row.bias - sol.delta0[static_cast<Eigen::Index>(j)]);
      worst = std::max(worst, gap);
      pass = pass && gap < 0.05;
      info(label.str() + ": MC mean - theta0 = " + fmt(row.bias) + ", delta0 = " +
           fmt(sol.delta0[static_cast<Eigen::Index>(j)]) + " (MC SE " +
           fmt(sol.se[static_cast<Eigen::Index>(j)], 2) + "), sd/sqrt(R) = " + fmt(row.sd / std::sqrt(200.0), 2));
    }
  }
  return {pass, "asym_arch n=5000 R=200: max |MC mean - theta0 - delta0| = " + fmt(worst, 3) + " (< 0.05)"};
}

Outcome bias_identification() {
  const auto grid = sqe::TauGrid::make(0.05, 0.05);
  const auto model = oracle::ParametricNoiseModel::from_dgp(dgp::find_dgp("asym_arch"));
  const oracle::BiasOracle orc(model, oracle_config());
  const auto at0 = orc.solve_bias(orc.tau0());
  double z0 = 0.0;
  for (Eigen::Index j = 0; j < at0.delta0.size(); ++j) {
    z0 = std::max(z0, std::abs(at0.delta0[j]) / at0.se[j]);
  }
  const auto curve = orc.bias_curve(grid);
  // weakest pair: the largest per-coordinate separation in joint SE units, minimized over pairs
  double min_sep = std::numeric_limits<double>::infinity();
  const std::size_t L = grid.levels.size();
  for (std::size_t a = 0; a < L; ++a) {
    for (std::size_t b = a + 1; b < L; ++b) {
      double sep = 0.0;
      for (Eigen::Index j = 0; j < orc.dim(); ++j) {
        sep = std::max(sep, std::abs(curve.delta0[a][j] - curve.delta0[b][j]) / curve.pair_se[a][b][j]);
      }
      min_sep = std::min(min_sep, sep);
    }
  }
  const auto sym_model = oracle::ParametricNoiseModel::from_dgp(dgp::find_dgp("sym_garch"));
  const oracle::BiasOracle sym(sym_model, oracle_config());
  const auto sym_curve = sym.bias_curve(grid);
  double sym_z = 0.0;
  double sym_max = 0.0;
  for (std::size_t a = 0; a < L; ++a) {
    for (Eigen::Index j = 0; j < sym.dim(); ++j) {
      const double v = std::abs(sym_curve.delta0[a][j]);
      sym_max = std::max(sym_max, v);
      if (v > 0.0) sym_z = std::max(sym_z, v / sym_curve.se[a][j]);
    }
  }
  info("delta0(tau0) = (" + fmt(at0.delta0[0], 3) + ", " + fmt(at0.delta0[1], 3) + "), max " + fmt(z0, 3) + " SE");
  info("symmetric: max |delta0| = " + fmt(sym_max, 3) + ", max " + fmt(sym_z, 3) + " SE");
  return {z0 <= 3.0 && min_sep > 3.0 && sym_z <= 3.0,
          "|delta0(tau0)| <= " + fmt(z0, 3) + " SE; weakest pair separation " + fmt(min_sep, 4) +
              " joint SE over " + std::to_string(L * (L - 1) / 2) + " pairs; symmetric max " + fmt(sym_z, 3) + " SE"};
}

// ------------------------------------------------------------------ 5, 6

struct RateResults {
  Outcome tau;
  Outcome theta;
};

harness::MetricsTable rate_table(const std::string& dgp_id, const sqe::TauGrid& grid, std::uint64_t seed) {
  harness::ExperimentSpec spec;
  spec.dgps = {dgp_id};
  spec.sizes = {500, 2000};
  spec.replications = 200;
  spec.estimation.grid = grid;
  spec.master_seed = seed;
  spec.threads = g_threads;
  return harness::run_experiment(spec);
}

void describe_rates(const harness::MetricsTable& t, const std::string& dgp_id, const std::string& label) {
  info(label + ": mean|tau-tau0|(2000) = " + fmt(t.row(dgp_id, 2000, "tau").mean_abs_error, 3) +
       ", ratios tau " + fmt(t.rate(dgp_id, "tau", 500, 2000), 3) + ", mu " +
       fmt(t.rate(dgp_id, "mu", 500, 2000), 3) + ", phi1 " + fmt(t.rate(dgp_id, "phi1", 500, 2000), 3));
}

RateResults rates() {
  const auto t = rate_table("asym_tvarch", acceptance_grid(), 501);
  const double mae = t.row("asym_tvarch", 2000, "tau").mean_abs_error;
  const double rt = t.rate("asym_tvarch", "tau", 500, 2000);
  const double rm = t.rate("asym_tvarch", "mu", 500, 2000);
  const double rp = t.rate("asym_tvarch", "phi1", 500, 2000);
  RateResults r;
  r.tau = {mae < 0.05 && within(rt, 1.4, 2.8),
           "asym_tvarch R=200: mean|tau_hat - tau0| at n=2000 = " + fmt(mae, 3) +
               " (< 0.05); RMSE(500)/RMSE(2000) = " + fmt(rt, 3) + " (in [1.4, 2.8])"};
  r.theta = {within(rm, 1.3, 3.0) && within(rp, 1.3, 3.0),
             "RMSE(500)/RMSE(2000): mu " + fmt(rm, 3) + ", phi1 " + fmt(rp, 3) + " (in [1.3, 3.0])"};
  for (const auto& row : t.rows) {
    info(row.parameter + " n=" + std::to_string(row.n) + ": bias " + fmt(row.bias, 3) + ", rmse " +
         fmt(row.rmse, 3) + ", failed " + std::to_string(row.failed_reps));
  }
  // for information only: the library default grid and the constant-volatility DGP
  try {
    describe_rates(rate_table("asym_tvarch", sqe::TauGrid::make(), 501), "asym_tvarch",
                   "info, default grid [0.05, 0.95]");
  } catch (const NumericError& e) {
    info(std::string("info, default grid: ") + e.what());
  }
  try {
    describe_rates(rate_table("asym_arch", acceptance_grid(), 502), "asym_arch", "info, asym_arch");
  } catch (const NumericError& e) {
    info(std::string("info, asym_arch: ") + e.what());
  }
  return r;
}

// ------------------------------------------------------------------ 7, 8

struct BootResults {
  Outcome coverage;
  Outcome wald;
};

BootResults bootstrap_checks() {
  const double tau0 = 1.0 - std::exp(-1.0);
  boot::BootstrapConfig bc;
  bc.replications = 199;
  boot::HypothesisSpec h;  // phi1 = 0.5, true
  h.A = Eigen::RowVector2d(0.0, 1.0);
  h.a = Eigen::VectorXd::Constant(1, 0.5);

  harness::ExperimentSpec cov;
  cov.dgps = {"asym_tvarch"};
  cov.sizes = {1000};
  cov.replications = 200;
  cov.estimation.grid = acceptance_grid();
  cov.bootstrap = bc;
  cov.tau1 = tau0;  // true: size of the tau test
  cov.master_seed = 701;
  cov.threads = g_threads;
  const auto tc = harness::run_experiment(cov);

  const auto model = oracle::ParametricNoiseModel::from_dgp(dgp::find_dgp("asym_tvarch"), cov.estimation.weight);
  const oracle::BiasOracle orc(model, oracle_config());
  const auto av = orc.asymptotic_variances(cov.estimation.family);
  const double gamma1 = std::sqrt(av.gamma1_sq);
  std::vector<double> roots;
  for (const auto& rec : tc.raw) {
    if (rec.ok) roots.push_back(std::sqrt(rec.gamma1_sq_hat));
  }
  std::sort(roots.begin(), roots.end());
  const double med = roots[roots.size() / 2];
  const double ratio = med / gamma1;
  std::size_t in_band = 0;
  for (double r : roots) in_band += within(r / gamma1, 0.5, 2.0) ? 1 : 0;
  bool pass = within(ratio, 0.5, 2.0);
  std::string cov_text;
  for (const std::string name : {"mu", "phi1", "tau"}) {
    const auto& row = tc.row("asym_tvarch", 1000, name);
    pass = pass && within(row.coverage95, 0.88, 0.99);
    cov_text += name + " " + fmt(row.coverage95, 3) + ", ";
    info(name + ": coverage90 " + fmt(row.coverage90, 3) + ", coverage95 " + fmt(row.coverage95, 3));
  }
  info("oracle gamma1 = " + fmt(gamma1, 4) + ", median sqrt(gamma1_sq_hat) = " + fmt(med, 4) + "; " +
       std::to_string(in_band) + "/" + std::to_string(roots.size()) + " replications within [0.5, 2]");
  BootResults out;
  out.coverage = {pass, "n=1000 J=199 R=200 coverage95: " + cov_text + "median sqrt(gamma1_sq_hat)/gamma1 = " +
                            fmt(ratio, 3) + " (in [0.5, 2])"};

  harness::ExperimentSpec w = cov;
  w.sizes = {2000};
  w.theta_hypothesis = h;
  w.tau1 = 0.5;
  w.master_seed = 801;
  const auto tw = harness::run_experiment(w);
  const double size_theta = tw.row("asym_tvarch", 2000, "phi1").reject_theta;
  const double power_tau = tw.row("asym_tvarch", 2000, "tau").reject_tau;
  const double size_tau = tc.row("asym_tvarch", 1000, "tau").reject_tau;
  out.wald = {within(size_theta, 0.01, 0.12) && within(size_tau, 0.01, 0.12) && power_tau >= 0.60,
              "size W_n(phi1=0.5) n=2000 " + fmt(size_theta, 3) + ", size w_n(tau0) n=1000 " + fmt(size_tau, 3) +
                  " (in [0.01, 0.12]); power w_n(tau1=0.5) n=2000 " + fmt(power_tau, 3) + " (>= 0.60)"};
  return out;
}

// ------------------------------------------------------------------ 9

Outcome symmetric_equivalence() {
  const auto& spec = dgp::find_dgp("sym_garch");
  taustep::TwoStepConfig cfg;
  cfg.intercept = false;
  std::size_t ok_path = 0;
  std::size_t ok_est = 0;
  double worst_path = 0.0;
  const std::size_t R = 100;
  for (std::size_t r = 0; r < R; ++r) {
    const auto sample = spec.simulate(2000, rng::derive_seed(901, {r}));
    const auto design = qreg::build_design(sample.values, 1, false);
    const auto path = sqe::estimate_path(design, cfg.weight, cfg.grid, cfg.path);
    const auto half = qreg::solve_wqr(design, path.weights, 0.5).theta_hat;
    double dev = 0.0;
    for (const auto& e : path.estimates) dev = std::max(dev, (e.theta_hat - half).cwiseAbs().maxCoeff());
    const auto est = taustep::two_step(sample, cfg);
    worst_path = std::max(worst_path, dev);
    ok_path += dev <= 0.15 ? 1 : 0;
    ok_est += (est.theta_hat - half).cwiseAbs().maxCoeff() <= 0.1 ? 1 : 0;
  }
  return {ok_path >= 90 && ok_est >= 90,
          "sym_garch n=2000: max_tau |theta(tau) - theta(0.5)| <= 0.15 in " + std::to_string(ok_path) +
              "/100, |theta_hat - theta(0.5)| <= 0.1 in " + std::to_string(ok_est) + "/100 (>= 90); worst path deviation " +
              fmt(worst_path, 3)};
}

// ------------------------------------------------------------------ 10

Outcome oracle_consistency() {
  const auto model = oracle::ParametricNoiseModel::from_dgp(dgp::find_dgp("asym_tvarch"));
  const auto cfg = oracle_config();
  const oracle::BiasOracle orc(model, cfg);
  const std::vector<std::pair<Eigen::Vector2d, double>> probes{
      {Eigen::Vector2d(0.0, 0.0), 0.5},    {Eigen::Vector2d(-0.2, 0.1), 0.3},
      {Eigen::Vector2d(0.3, -0.1), 0.8},   {Eigen::Vector2d(0.1, 0.05), 0.632},
      {Eigen::Vector2d(-0.4, -0.2), 0.15}};
  const double h = 1e-4;
  double worst_jac = 0.0;
  for (const auto& [x, tau] : probes) {
    const Eigen::MatrixXd J = orc.jacobian(x, tau);
    for (Eigen::Index c = 0; c < 2; ++c) {
      Eigen::Vector2d e = Eigen::Vector2d::Zero();
      e[c] = h;
      const Eigen::VectorXd fd = (orc.g(x + e, tau).value - orc.g(x - e, tau).value) / (2 * h);
      worst_jac = std::max(worst_jac, (fd - J.col(c)).cwiseAbs().maxCoeff());
    }
  }
  // s-grid refinement and path doubling at two levels on either side of tau0
  auto fine = cfg;
  fine.s_grid = oracle::OracleConfig::equispaced(21);
  auto twice = cfg;
  twice.mc_paths = 2 * cfg.mc_paths;
  const oracle::BiasOracle fine_orc(model, fine);
  const oracle::BiasOracle twice_orc(model, twice);
  double worst_sgrid = 0.0;
  double lo_ratio = std::numeric_limits<double>::infinity();
  double hi_ratio = 0.0;
  for (double tau : {0.3, 0.8}) {
    const auto a = orc.solve_bias(tau);
    const auto b = fine_orc.solve_bias(tau);
    const auto c = twice_orc.solve_bias(tau);
    for (Eigen::Index j = 0; j < a.se.size(); ++j) {
      worst_sgrid = std::max(worst_sgrid, std::abs(a.delta0[j] - b.delta0[j]) / a.se[j]);
      lo_ratio = std::min(lo_ratio, a.se[j] / c.se[j]);
      hi_ratio = std::max(hi_ratio, a.se[j] / c.se[j]);
    }
  }
  return {worst_jac <= 5e-3 && worst_sgrid < 1.0 && lo_ratio >= 1.25 && hi_ratio <= 1.6,
          "max |jacobian - central difference| = " + fmt(worst_jac, 3) + " (<= 5e-3) at 5 probes; s-grid 11->21 moves delta0 by " +
              fmt(worst_sgrid, 3) + " SE (< 1); SE ratio for doubled paths in [" + fmt(lo_ratio, 3) + ", " +
              fmt(hi_ratio, 3) + "] (within [1.25, 1.6])"};
}

// ------------------------------------------------------------------ 11

std::string pipeline_digest(int threads) {
  std::ostringstream all;
  const auto sample = dgp::find_dgp("asym_tvarch").simulate(800, 1101);
  io::write_series_csv(all, sample.values);
  taustep::TwoStepConfig cfg;
  cfg.path.threads = threads;
  const auto est = taustep::two_step(sample, cfg);
  all << taustep::to_json(est).dump();
  auto design = qreg::build_design(sample.values, cfg.p, cfg.intercept);
  auto nowarm = cfg.path;
  nowarm.warm_start = false;
  sqe::write_path_csv(all, sqe::estimate_path(design, cfg.weight, cfg.grid, nowarm));
  boot::BootstrapConfig bc;
  bc.replications = 30;
  bc.threads = threads;
  const auto bs = boot::bootstrap_two_step(sample.values, est, cfg, bc);
  all << boot::to_json(bs).dump();
  boot::write_draws_csv(all, bs);
  oracle::OracleConfig oc;
  oc.mc_paths = 20000;
  oc.threads = threads;
  const oracle::BiasOracle orc(oracle::ParametricNoiseModel::from_dgp(dgp::find_dgp("asym_tvarch")), oc);
  all << oracle::to_json(orc.bias_curve(sqe::TauGrid::make(0.2, 0.2))).dump();
  all << oracle::to_json(orc.asymptotic_variances(cfg.family)).dump();
  harness::ExperimentSpec spec;
  spec.sizes = {300, 600};
  spec.replications = 6;
  spec.fixed_taus = {0.4};
  spec.threads = threads;
  const auto table = harness::run_experiment(spec);
  harness::write_metrics_csv(all, table);
  harness::write_rates_csv(all, table);
  harness::write_raw_csv(all, table);
  return sha(all.str());
}

Outcome determinism() {
  std::set<std::string> seen;
  std::string text;
  for (int t : {1, 2, 4, 1}) {
    const auto d = pipeline_digest(t);
    seen.insert(d);
    text += "threads " + std::to_string(t) + " -> " + d + "; ";
  }
  return {seen.size() == 1, text + "all identical: " + (seen.size() == 1 ? "yes" : "no")};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance criteria"};
  std::string only;
  app.add_option("--threads", g_threads, "worker threads");
  app.add_option("--only", only, "comma-separated criteria to run");
  CLI11_PARSE(app, argc, argv);
  std::set<int> run;
  if (only.empty()) {
    for (int i = 1; i <= 11; ++i) run.insert(i);
  } else {
    std::istringstream is(only);
    std::string tok;
    while (std::getline(is, tok, ',')) run.insert(std::stoi(tok));
    run.insert(2);
    if (run.count(6)) run.insert(5);
    if (run.count(8)) run.insert(7);
  }

  qreg::reset_solve_stats();
  std::map<int, Outcome> results;
  auto attempt = [&](int id, auto&& body) {
    if (!run.count(id)) return;
    const auto t0 = std::chrono::steady_clock::now();
    std::cout << "criterion " << id << " ..." << std::endl;
    try {
      body();
    } catch (const std::exception& e) {
      results[id] = {false, std::string("exception: ") + e.what()};
    }
    std::cout << "    (" << fmt(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(), 4)
              << " s)" << std::endl;
  };
  attempt(1, [&] { results[1] = qr_oracle(); });
  attempt(3, [&] { results[3] = bias_curve_agreement(); });
  attempt(4, [&] { results[4] = bias_identification(); });
  attempt(5, [&] {
    const auto r = rates();
    results[5] = r.tau;
    results[6] = r.theta;
  });
  attempt(7, [&] {
    const auto r = bootstrap_checks();
    results[7] = r.coverage;
    results[8] = r.wald;
  });
  attempt(9, [&] { results[9] = symmetric_equivalence(); });
  attempt(10, [&] { results[10] = oracle_consistency(); });
  attempt(11, [&] { results[11] = determinism(); });
  const auto st = qreg::solve_stats();
  results[2] = {st.certificate_failures == 0 && (st.solves > 0 || !only.empty()),
                std::to_string(st.certificate_failures) + " certificate failures in " + std::to_string(st.solves) +
                    " solves of this run (unit suites enforce the same)"};

  int failed = 0;
  std::cout << "\n";
  for (const auto& [id, r] : results) {
    failed += r.pass ? 0 : 1;
    std::cout << (r.pass ? "PASS" : "FAIL") << "  criterion " << std::setw(2) << id << ": " << r.detail << "\n";
  }
  std::cout << (failed == 0 ? "all criteria passed" : std::to_string(failed) + " criteria failed") << std::endl;
  return failed;
}
