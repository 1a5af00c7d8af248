#pragma once

// Random-weighting bootstrap of the two-step estimator. Each replication
// draws i.i.d. multipliers w*_t in {0, 2}; rows with w* = 0 drop out of both
// steps, surviving rows enter the first step with weight 2 w_t and the moment
// family with 2 w~_lt (moments still normalized by the full row count).

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"
#include "tsqr/rng.hpp"
#include "tsqr/taustep.hpp"

namespace tsqr::boot {

enum class CiMethod { normal, percentile };

struct BootstrapConfig {
  std::size_t replications = 499;
  std::uint64_t seed = 1;
  int threads = 1;
  bool reuse_grid = true;  // original grid plus refinement; false keeps grid resolution only
  CiMethod method = CiMethod::normal;
  bool unit_multipliers = false;  // test hook: every w* = 1
  double max_skip_fraction = 0.05;

  void validate() const;
};

/// n i.i.d. fair draws from {0, 2} (top bit of each engine output).
[[nodiscard]] std::vector<double> draw_multipliers(std::size_t n, rng::Engine& stream);

/// Stream for replication j.
[[nodiscard]] rng::Engine replication_stream(std::uint64_t seed, std::size_t j);

struct Draw {
  std::size_t index = 0;
  double tau_star = 0.0;
  Eigen::VectorXd theta_star;
};

struct Interval {
  double level = 0.95;
  double lower = 0.0;
  double upper = 0.0;
  [[nodiscard]] bool covers(double x) const noexcept { return lower <= x && x <= upper; }
};

struct ParameterCi {
  std::string name;
  double estimate = 0.0;
  double se = 0.0;  // sqrt(covariance / n)
  std::vector<Interval> intervals;  // levels 0.90 and 0.95
};

struct BootstrapSummary {
  std::vector<Draw> draws;  // successful replications, in index order
  std::vector<std::size_t> skipped;
  std::vector<std::string> skip_reasons;
  double gamma1_sq_hat = 0.0;
  Eigen::MatrixXd Gamma1_hat;
  std::vector<ParameterCi> ci;  // coefficients in design order, then "tau"
  CiMethod method = CiMethod::normal;
  std::size_t n = 0;
  double tau_hat = 0.0;
  Eigen::VectorXd theta_hat;
  std::string warning;  // set when J < 100: covariance estimates are unreliable
};

/// Coefficient names: "mu", "phi1", ... (no "mu" when intercept-free).
[[nodiscard]] std::vector<std::string> coefficient_names(std::size_t p, bool intercept);

/// Throws AggregateFailure when more than max_skip_fraction of replications fail.
[[nodiscard]] BootstrapSummary bootstrap_two_step(std::span<const double> series,
                                                  const taustep::TwoStepEstimate& estimate,
                                                  const taustep::TwoStepConfig& config,
                                                  const BootstrapConfig& boot);

struct HypothesisSpec {
  Eigen::MatrixXd A;  // s x k, full row rank
  Eigen::VectorXd a;  // s

  void validate(Eigen::Index k) const;
};

struct TestResult {
  double statistic = 0.0;
  double p_value = 1.0;
  int df = 1;
};

/// Upper tail of the chi-square distribution with `df` degrees of freedom.
[[nodiscard]] double chi2_upper_tail(double x, int df);

/// W = n (A theta - a)' (A Gamma A')^{-1} (A theta - a); Gamma is on the sqrt(n) scale.
[[nodiscard]] TestResult wald_theta(const Eigen::VectorXd& theta_hat, const Eigen::MatrixXd& Gamma1_hat,
                                    const HypothesisSpec& hyp, std::size_t n);
/// w = n (tau_hat - tau1)^2 / gamma1_sq_hat.
[[nodiscard]] TestResult wald_tau(double tau_hat, double gamma1_sq_hat, double tau1, std::size_t n);

[[nodiscard]] nlohmann::json to_json(const BootstrapSummary& s);
/// CSV `j,tau_star,theta_star_0,...`.
void write_draws_csv(std::ostream& os, const BootstrapSummary& s);

}  // namespace tsqr::boot
