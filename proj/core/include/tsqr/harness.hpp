#pragma once

#include <cstdint>
#include <iosfwd>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"
#include "tsqr/bootstrap.hpp"
#include "tsqr/taustep.hpp"

namespace tsqr::harness {

struct ExperimentSpec {
  std::vector<std::string> dgps{"asym_tvarch"};
  std::vector<std::size_t> sizes{500, 2000};
  std::size_t replications = 200;
  taustep::TwoStepConfig estimation{};
  std::optional<boot::BootstrapConfig> bootstrap;  // enables coverage and Wald metrics
  std::optional<boot::HypothesisSpec> theta_hypothesis;  // rejection rate of W_n at 5%
  std::optional<double> tau1;                            // rejection rate of w_n at 5%
  std::vector<double> fixed_taus;  // also record theta_hat(tau) at these levels
  std::uint64_t master_seed = 1;
  int threads = 1;
  double max_failure_fraction = 0.05;

  void validate() const;
};

struct ReplicationRecord {
  std::string dgp;
  std::size_t n = 0;
  std::size_t rep = 0;
  std::uint64_t seed = 0;
  bool ok = false;
  std::string error;
  double tau_hat = 0.0;
  Eigen::VectorXd theta_hat;
  bool boundary_flag = false;
  std::vector<Eigen::VectorXd> fixed;  // theta_hat(tau) per fixed level
  // bootstrap outputs (present when ExperimentSpec::bootstrap is set)
  double gamma1_sq_hat = 0.0;
  Eigen::VectorXd gamma_diag;
  std::vector<bool> covers90, covers95;  // per parameter, coefficients then tau
  double wald_theta = 0.0, wald_theta_p = 1.0;
  double wald_tau = 0.0, wald_tau_p = 1.0;
};

struct MetricsRow {
  std::string dgp;
  std::size_t n = 0;
  std::string parameter;
  double truth = 0.0;
  double mean = 0.0;
  double bias = 0.0;
  double sd = 0.0;    // 1/R convention, so rmse^2 = bias^2 + sd^2
  double rmse = 0.0;
  double mean_abs_error = 0.0;
  double coverage90 = std::numeric_limits<double>::quiet_NaN();
  double coverage95 = std::numeric_limits<double>::quiet_NaN();
  double reject_theta = std::numeric_limits<double>::quiet_NaN();
  double reject_tau = std::numeric_limits<double>::quiet_NaN();
  std::size_t reps = 0;
  std::size_t failed_reps = 0;
};

struct RateRow {
  std::string dgp;
  std::string parameter;
  std::size_t n1 = 0, n2 = 0;
  double ratio = 0.0;  // RMSE(n1) / RMSE(n2)
};

struct MetricsTable {
  std::vector<MetricsRow> rows;
  std::vector<RateRow> rates;
  std::vector<ReplicationRecord> raw;

  [[nodiscard]] const MetricsRow& row(const std::string& dgp, std::size_t n,
                                      const std::string& parameter) const;
  [[nodiscard]] double rate(const std::string& dgp, const std::string& parameter, std::size_t n1,
                            std::size_t n2) const;
};

/// Per-replication seed: derived from (master seed, dgp index, n, replication).
[[nodiscard]] std::uint64_t replication_seed(std::uint64_t master, std::size_t dgp_index,
                                             std::size_t n, std::size_t rep);

/// Throws AggregateFailure when a (dgp, n) cell loses more than the allowed fraction.
[[nodiscard]] MetricsTable run_experiment(const ExperimentSpec& spec);

/// Parameter names of a table: coefficients, "tau", then "<coef>@<tau>" for fixed levels.
[[nodiscard]] std::vector<std::string> parameter_names(const ExperimentSpec& spec);

void write_metrics_csv(std::ostream& os, const MetricsTable& t);
void write_rates_csv(std::ostream& os, const MetricsTable& t);
void write_raw_csv(std::ostream& os, const MetricsTable& t);

void to_json(nlohmann::json& j, const ExperimentSpec& s);
void from_json(const nlohmann::json& j, ExperimentSpec& s);

}  // namespace tsqr::harness
