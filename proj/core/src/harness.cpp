#include "tsqr/harness.hpp"

#include <cmath>
#include <ostream>
#include <sstream>

#include "tsqr/dgp.hpp"
#include "tsqr/errors.hpp"
#include "tsqr/parallel.hpp"
#include "tsqr/rng.hpp"
#include "tsqr/series_io.hpp"

namespace tsqr::harness {

namespace {

std::string tau_label(double tau) {
  std::ostringstream os;
  os << tau;
  return os.str();
}

taustep::TwoStepConfig config_for(const ExperimentSpec& spec, const dgp::DgpSpec& d) {
  taustep::TwoStepConfig cfg = spec.estimation;
  cfg.p = d.theta.order();
  cfg.intercept = d.theta.has_intercept();
  if (static_cast<std::size_t>(cfg.family.p_tilde) > cfg.p) cfg.family.p_tilde = 0;
  return cfg;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c == '\n' ? ' ' : c;
  }
  return out + "\"";
}

}  // namespace

void ExperimentSpec::validate() const {
  if (dgps.empty() || sizes.empty()) throw InvalidInput("experiment needs DGPs and sample sizes");
  for (const auto& id : dgps) (void)dgp::find_dgp(id);
  if (replications < 1) throw InvalidInput("experiment needs at least one replication");
  if ((bootstrap || theta_hypothesis || tau1) && replications < 50) {
    throw InvalidInput("interval and size metrics need at least 50 replications");
  }
  if ((theta_hypothesis || tau1) && !bootstrap) {
    throw InvalidInput("Wald tests need a bootstrap configuration");
  }
  for (double t : fixed_taus) {
    if (!(t > 0.0 && t < 1.0)) throw InvalidInput("fixed levels must lie in (0, 1)");
  }
  if (bootstrap) bootstrap->validate();
}

std::uint64_t replication_seed(std::uint64_t master, std::size_t dgp_index, std::size_t n,
                               std::size_t rep) {
  return rng::derive_seed(master, {0x4a55, dgp_index, n, rep});
}

std::vector<std::string> parameter_names(const ExperimentSpec& spec) {
  const auto& d = dgp::find_dgp(spec.dgps.front());
  auto coefs = boot::coefficient_names(d.theta.order(), d.theta.has_intercept());
  std::vector<std::string> out = coefs;
  out.emplace_back("tau");
  for (double t : spec.fixed_taus) {
    for (const auto& c : coefs) out.push_back(c + "@" + tau_label(t));
  }
  return out;
}

MetricsTable run_experiment(const ExperimentSpec& spec) {
  spec.validate();
  MetricsTable table;
  for (std::size_t di = 0; di < spec.dgps.size(); ++di) {
    const auto& d = dgp::find_dgp(spec.dgps[di]);
    const taustep::TwoStepConfig cfg = config_for(spec, d);
    const auto coefs = boot::coefficient_names(cfg.p, cfg.intercept);
    const Eigen::VectorXd theta0 = d.theta.coefficients();
    const double tau0 = dgp::innovation_tau0(d.innovation);
    const auto k = static_cast<Eigen::Index>(coefs.size());
    if (spec.theta_hypothesis && spec.theta_hypothesis->A.cols() != k) {
      throw InvalidInput("hypothesis dimension does not match DGP '" + d.id + "'");
    }

    for (std::size_t n : spec.sizes) {
      std::vector<ReplicationRecord> recs(spec.replications);
      parallel_for(spec.replications, spec.threads, [&](std::size_t r) {
        ReplicationRecord& rec = recs[r];
        rec.dgp = d.id;
        rec.n = n;
        rec.rep = r;
        rec.seed = replication_seed(spec.master_seed, di, n, r);
        try {
          const auto sample = d.simulate(n, rec.seed);
          const auto est = taustep::two_step(sample, cfg);
          rec.tau_hat = est.tau_hat;
          rec.theta_hat = est.theta_hat;
          rec.boundary_flag = est.boundary_flag;
          if (!spec.fixed_taus.empty()) {
            const auto design = qreg::build_design(sample, cfg.p, cfg.intercept);
            const auto w = qreg::eval_weights(cfg.weight, design);
            for (double t : spec.fixed_taus) {
              rec.fixed.push_back(qreg::solve_wqr(design, w, t, cfg.path.solver).theta_hat);
            }
          }
          if (spec.bootstrap) {
            boot::BootstrapConfig bc = *spec.bootstrap;
            bc.seed = rng::derive_seed(rec.seed, {0xb0});
            bc.threads = 1;
            const auto bs = boot::bootstrap_two_step(sample.values, est, cfg, bc);
            rec.gamma1_sq_hat = bs.gamma1_sq_hat;
            rec.gamma_diag = bs.Gamma1_hat.diagonal();
            for (std::size_t j = 0; j < bs.ci.size(); ++j) {
              const double truth = j + 1 < bs.ci.size() ? theta0[static_cast<Eigen::Index>(j)] : tau0;
              rec.covers90.push_back(bs.ci[j].intervals[0].covers(truth));
              rec.covers95.push_back(bs.ci[j].intervals[1].covers(truth));
            }
            if (spec.theta_hypothesis) {
              const auto wt = boot::wald_theta(est.theta_hat, bs.Gamma1_hat, *spec.theta_hypothesis, n);
              rec.wald_theta = wt.statistic;
              rec.wald_theta_p = wt.p_value;
            }
            if (spec.tau1) {
              const auto wt = boot::wald_tau(est.tau_hat, bs.gamma1_sq_hat, *spec.tau1, n);
              rec.wald_tau = wt.statistic;
              rec.wald_tau_p = wt.p_value;
            }
          }
          rec.ok = true;
        } catch (const NumericError& e) {
          rec.error = e.what();
        } catch (const InvalidInput& e) {
          rec.error = e.what();
        }
      });

      std::vector<const ReplicationRecord*> good;
      for (const auto& rec : recs) {
        if (rec.ok) good.push_back(&rec);
      }
      const std::size_t failed = recs.size() - good.size();
      if (static_cast<double>(failed) > spec.max_failure_fraction * static_cast<double>(recs.size())) {
        std::string first;
        for (const auto& rec : recs) {
          if (!rec.ok) {
            first = rec.error;
            break;
          }
        }
        throw AggregateFailure(failed, recs.size(),
                               d.id + " n=" + std::to_string(n) + ": " + std::to_string(failed) +
                                   " replications failed; first error: " + first);
      }

      const double R = static_cast<double>(good.size());
      auto add_row = [&](const std::string& name, double truth, auto value_of, int ci_index) {
        MetricsRow row;
        row.dgp = d.id;
        row.n = n;
        row.parameter = name;
        row.truth = truth;
        row.reps = good.size();
        row.failed_reps = failed;
        double sum = 0.0;
        double abs_sum = 0.0;
        for (const auto* rec : good) {
          const double v = value_of(*rec);
          sum += v;
          abs_sum += std::abs(v - truth);
        }
        row.mean = sum / R;
        row.bias = row.mean - truth;
        double ss = 0.0;
        for (const auto* rec : good) {
          const double dv = value_of(*rec) - row.mean;
          ss += dv * dv;
        }
        row.sd = std::sqrt(ss / R);
        row.rmse = std::sqrt(row.bias * row.bias + row.sd * row.sd);
        row.mean_abs_error = abs_sum / R;
        if (spec.bootstrap && ci_index >= 0) {
          double c90 = 0.0;
          double c95 = 0.0;
          for (const auto* rec : good) {
            c90 += rec->covers90[static_cast<std::size_t>(ci_index)] ? 1.0 : 0.0;
            c95 += rec->covers95[static_cast<std::size_t>(ci_index)] ? 1.0 : 0.0;
          }
          row.coverage90 = c90 / R;
          row.coverage95 = c95 / R;
          if (spec.theta_hypothesis) {
            double rej = 0.0;
            for (const auto* rec : good) rej += rec->wald_theta_p < 0.05 ? 1.0 : 0.0;
            row.reject_theta = rej / R;
          }
          if (spec.tau1) {
            double rej = 0.0;
            for (const auto* rec : good) rej += rec->wald_tau_p < 0.05 ? 1.0 : 0.0;
            row.reject_tau = rej / R;
          }
        }
        table.rows.push_back(row);
      };
      for (Eigen::Index j = 0; j < k; ++j) {
        add_row(coefs[static_cast<std::size_t>(j)], theta0[j],
                [j](const ReplicationRecord& rec) { return rec.theta_hat[j]; }, static_cast<int>(j));
      }
      add_row("tau", tau0, [](const ReplicationRecord& rec) { return rec.tau_hat; },
              static_cast<int>(k));
      for (std::size_t f = 0; f < spec.fixed_taus.size(); ++f) {
        for (Eigen::Index j = 0; j < k; ++j) {
          add_row(coefs[static_cast<std::size_t>(j)] + "@" + tau_label(spec.fixed_taus[f]), theta0[j],
                  [f, j](const ReplicationRecord& rec) { return rec.fixed[f][j]; }, -1);
        }
      }
      for (auto& rec : recs) table.raw.push_back(std::move(rec));
    }

    // rate rows for every ordered pair of sizes
    for (std::size_t a = 0; a < spec.sizes.size(); ++a) {
      for (std::size_t b = a + 1; b < spec.sizes.size(); ++b) {
        for (const auto& row : table.rows) {
          if (row.dgp != d.id || row.n != spec.sizes[a]) continue;
          const auto& other = table.row(d.id, spec.sizes[b], row.parameter);
          table.rates.push_back({d.id, row.parameter, spec.sizes[a], spec.sizes[b],
                                 row.rmse / other.rmse});
        }
      }
    }
  }
  return table;
}

const MetricsRow& MetricsTable::row(const std::string& dgp, std::size_t n,
                                    const std::string& parameter) const {
  for (const auto& r : rows) {
    if (r.dgp == dgp && r.n == n && r.parameter == parameter) return r;
  }
  throw InvalidInput("no metrics row for " + dgp + " n=" + std::to_string(n) + " " + parameter);
}

double MetricsTable::rate(const std::string& dgp, const std::string& parameter, std::size_t n1,
                          std::size_t n2) const {
  for (const auto& r : rates) {
    if (r.dgp == dgp && r.parameter == parameter && r.n1 == n1 && r.n2 == n2) return r.ratio;
  }
  throw InvalidInput("no rate row for " + dgp + " " + parameter);
}

void write_metrics_csv(std::ostream& os, const MetricsTable& t) {
  os << "dgp,n,parameter,truth,mean,bias,sd,rmse,mean_abs_error,coverage90,coverage95,"
        "reject_theta,reject_tau,reps,failed_reps\n";
  for (const auto& r : t.rows) {
    os << r.dgp << ',' << r.n << ',' << csv_field(r.parameter) << ',' << io::format_double(r.truth)
       << ',' << io::format_double(r.mean) << ',' << io::format_double(r.bias) << ','
       << io::format_double(r.sd) << ',' << io::format_double(r.rmse) << ','
       << io::format_double(r.mean_abs_error) << ',' << io::format_double(r.coverage90) << ','
       << io::format_double(r.coverage95) << ',' << io::format_double(r.reject_theta) << ','
       << io::format_double(r.reject_tau) << ',' << r.reps << ',' << r.failed_reps << '\n';
  }
}

void write_rates_csv(std::ostream& os, const MetricsTable& t) {
  os << "dgp,parameter,n1,n2,rmse_ratio\n";
  for (const auto& r : t.rates) {
    os << r.dgp << ',' << csv_field(r.parameter) << ',' << r.n1 << ',' << r.n2 << ','
       << io::format_double(r.ratio) << '\n';
  }
}

void write_raw_csv(std::ostream& os, const MetricsTable& t) {
  Eigen::Index k = 0;
  std::size_t nfixed = 0;
  for (const auto& r : t.raw) {
    if (r.ok) {
      k = std::max(k, r.theta_hat.size());
      nfixed = std::max(nfixed, r.fixed.size());
    }
  }
  os << "dgp,n,rep,seed,ok,tau_hat";
  for (Eigen::Index j = 0; j < k; ++j) os << ",theta_" << j;
  for (std::size_t f = 0; f < nfixed; ++f) {
    for (Eigen::Index j = 0; j < k; ++j) os << ",fixed" << f << "_" << j;
  }
  os << ",boundary_flag,gamma1_sq_hat,wald_theta,wald_theta_p,wald_tau,wald_tau_p,error\n";
  for (const auto& r : t.raw) {
    os << r.dgp << ',' << r.n << ',' << r.rep << ',' << r.seed << ',' << (r.ok ? 1 : 0) << ','
       << io::format_double(r.tau_hat);
    for (Eigen::Index j = 0; j < k; ++j) {
      os << ',' << (j < r.theta_hat.size() ? io::format_double(r.theta_hat[j]) : "");
    }
    for (std::size_t f = 0; f < nfixed; ++f) {
      for (Eigen::Index j = 0; j < k; ++j) {
        os << ',' << (f < r.fixed.size() ? io::format_double(r.fixed[f][j]) : "");
      }
    }
    os << ',' << (r.boundary_flag ? 1 : 0) << ',' << io::format_double(r.gamma1_sq_hat) << ','
       << io::format_double(r.wald_theta) << ',' << io::format_double(r.wald_theta_p) << ','
       << io::format_double(r.wald_tau) << ',' << io::format_double(r.wald_tau_p) << ','
       << csv_field(r.error) << '\n';
  }
}

void to_json(nlohmann::json& j, const ExperimentSpec& s) {
  j = nlohmann::json{{"dgps", s.dgps},
                     {"sizes", s.sizes},
                     {"replications", s.replications},
                     {"estimation", s.estimation},
                     {"fixed_taus", s.fixed_taus},
                     {"master_seed", s.master_seed},
                     {"threads", s.threads}};
  if (s.bootstrap) {
    j["bootstrap"] = {{"replications", s.bootstrap->replications},
                      {"method", s.bootstrap->method == boot::CiMethod::normal ? "normal" : "percentile"},
                      {"reuse_grid", s.bootstrap->reuse_grid}};
  }
  if (s.theta_hypothesis) {
    nlohmann::json A = nlohmann::json::array();
    for (Eigen::Index r = 0; r < s.theta_hypothesis->A.rows(); ++r) {
      std::vector<double> row;
      for (Eigen::Index c = 0; c < s.theta_hypothesis->A.cols(); ++c) {
        row.push_back(s.theta_hypothesis->A(r, c));
      }
      A.push_back(row);
    }
    const auto& a = s.theta_hypothesis->a;
    j["theta_hypothesis"] = {{"A", A}, {"a", std::vector<double>(a.data(), a.data() + a.size())}};
  }
  if (s.tau1) j["tau1"] = *s.tau1;
}

void from_json(const nlohmann::json& j, ExperimentSpec& s) {
  if (j.contains("dgps")) s.dgps = j.at("dgps").get<std::vector<std::string>>();
  if (j.contains("sizes")) s.sizes = j.at("sizes").get<std::vector<std::size_t>>();
  s.replications = j.value("replications", s.replications);
  if (j.contains("estimation")) s.estimation = j.at("estimation").get<taustep::TwoStepConfig>();
  s.fixed_taus = j.value("fixed_taus", s.fixed_taus);
  s.master_seed = j.value("master_seed", s.master_seed);
  s.threads = j.value("threads", s.threads);
  if (j.contains("bootstrap")) {
    const auto& b = j.at("bootstrap");
    boot::BootstrapConfig bc;
    bc.replications = b.value("replications", bc.replications);
    bc.reuse_grid = b.value("reuse_grid", bc.reuse_grid);
    const std::string method = b.value("method", std::string("normal"));
    if (method == "normal") {
      bc.method = boot::CiMethod::normal;
    } else if (method == "percentile") {
      bc.method = boot::CiMethod::percentile;
    } else {
      throw InvalidInput("unknown interval method '" + method + "'");
    }
    s.bootstrap = bc;
  }
  if (j.contains("theta_hypothesis")) {
    const auto rows = j.at("theta_hypothesis").at("A").get<std::vector<std::vector<double>>>();
    const auto a = j.at("theta_hypothesis").at("a").get<std::vector<double>>();
    boot::HypothesisSpec h;
    const auto cols = rows.empty() ? 0 : rows.front().size();
    h.A.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(cols));
    for (std::size_t r = 0; r < rows.size(); ++r) {
      if (rows[r].size() != cols) throw InvalidInput("ragged hypothesis matrix");
      for (std::size_t c = 0; c < cols; ++c) {
        h.A(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
      }
    }
    h.a = Eigen::Map<const Eigen::VectorXd>(a.data(), static_cast<Eigen::Index>(a.size()));
    s.theta_hypothesis = h;
  }
  if (j.contains("tau1")) s.tau1 = j.at("tau1").get<double>();
}

}  // namespace tsqr::harness
