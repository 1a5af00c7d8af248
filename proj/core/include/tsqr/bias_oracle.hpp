#pragma once

// Monte Carlo ground truth for the population objects of the two-step
// estimator under a parametric noise model. Every expectation is
//
//   E[...] = int_0^1 E[ ... at the stationary process frozen at ratio s ] ds,
//
// computed by trapezoid weights over an s-grid and averages over stationary
// draws (Z_{t-1}(s), sigma_t(s)). Conditional on the past the response error
// is sigma_t eta_t, so F(x'Z) = F_eta(x'Z / sigma_t) and F_1 = f_eta(.) / sigma_t.
//
// Draws use common random numbers: the innovation stream of path i is the
// same for every s, for every Newton iterate and for every tau, so all
// oracle outputs are smooth deterministic functions of their arguments.

#include <cstdint>
#include <iosfwd>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"
#include "tsqr/dgp.hpp"
#include "tsqr/qreg.hpp"
#include "tsqr/sqe.hpp"
#include "tsqr/taustep.hpp"

namespace tsqr::oracle {

struct ParametricNoiseModel {
  dgp::InnovationSpec innovation;
  dgp::VolatilitySpec volatility;
  dgp::ThetaVector theta_true;
  qreg::WeightSpec weight = qreg::WeightSpec::power(2.0);

  [[nodiscard]] static ParametricNoiseModel from_dgp(const dgp::DgpSpec& spec,
                                                     qreg::WeightSpec weight = qreg::WeightSpec::power(2.0));
  void validate() const;
  [[nodiscard]] double tau0() const { return dgp::innovation_tau0(innovation); }
};

struct OracleConfig {
  std::vector<double> s_grid = equispaced(11);
  std::size_t mc_paths = 200000;
  std::uint64_t seed = 1;
  double newton_tol = 1e-8;
  int newton_max_iter = 50;
  std::size_t burn_in = 1000;  // per chain
  std::size_t thin = 20;       // steps between recorded draws of a chain
  std::size_t chunk = 2000;    // draws per chain
  int threads = 1;

  [[nodiscard]] static std::vector<double> equispaced(std::size_t points);
  void validate() const;
};

struct VectorEstimate {
  Eigen::VectorXd value;
  Eigen::VectorXd se;
};

struct BiasSolution {
  Eigen::VectorXd delta0;
  Eigen::VectorXd se;
  int iterations = 0;
  std::vector<double> trace;  // max |g| per iterate
};

struct BiasCurve {
  sqe::TauGrid levels;
  std::vector<Eigen::VectorXd> delta0;
  std::vector<Eigen::VectorXd> se;
  Eigen::VectorXd derivative_at_tau0;
  Eigen::VectorXd derivative_se;
  /// Joint MC SE of delta0(levels[a]) - delta0(levels[b]), per coordinate.
  std::vector<std::vector<Eigen::VectorXd>> pair_se;
};

struct AsymptoticVariances {
  double tau0 = 0.5;
  double gamma1_sq = 0.0;
  Eigen::MatrixXd Gamma1;
  Eigen::MatrixXd Sigma;            // at tau0
  Eigen::VectorXd delta0_prime;     // d delta0 / d tau at tau0
  Eigen::MatrixXd b;                // k x L, column l is b(tau0; w~_l)
  Eigen::VectorXd gtilde_at_tau0;   // L
  Eigen::VectorXd gtilde_deriv;     // central difference, h = 0.01
  Eigen::VectorXd gtilde_deriv_se;
  Eigen::VectorXd gtilde_deriv_analytic;  // E[w~_l] - b_l' delta0'
  std::vector<int> active;          // members with |derivative| above 3 SE and the round-off floor
  Eigen::VectorXd a;                // L, zero outside the active set
};

struct IdentificationReport {
  std::vector<double> taus;
  std::vector<double> sum_sq;     // sum_l g~_l(tau)^2
  std::vector<double> sum_sq_se;
  std::vector<bool> flagged;      // within 3 SE of zero while |tau - tau0| >= 0.05
  Eigen::VectorXd derivative;     // d g~_l / d tau at tau0
  Eigen::VectorXd derivative_se;
  bool derivative_flag = false;   // no member has a detectable derivative
  [[nodiscard]] bool any_flag() const;
};

class BiasOracle {
 public:
  BiasOracle(ParametricNoiseModel model, OracleConfig config);

  [[nodiscard]] const ParametricNoiseModel& model() const noexcept { return model_; }
  [[nodiscard]] const OracleConfig& config() const noexcept { return config_; }
  [[nodiscard]] Eigen::Index dim() const noexcept { return k_; }
  [[nodiscard]] double tau0() const noexcept { return tau0_; }

  /// g(x, tau) = -E[w Z (tau - F(x'Z))] with per-coordinate MC SE.
  [[nodiscard]] VectorEstimate g(const Eigen::VectorXd& x, double tau) const;
  /// E[w Z Z' F_1(x'Z)], symmetrized; throws OracleFailure unless positive definite.
  [[nodiscard]] Eigen::MatrixXd jacobian(const Eigen::VectorXd& x, double tau) const;
  /// Newton root of g(., tau) from 0; throws NoConvergence with the trace.
  [[nodiscard]] BiasSolution solve_bias(double tau) const;
  /// d delta0 / d tau at tau0, J(0)^{-1} E[w Z], with MC SE.
  [[nodiscard]] VectorEstimate bias_derivative_at_tau0() const;
  /// Sigma(tau) = E[w Z Z' F_1(delta0(tau)' Z)].
  [[nodiscard]] Eigen::MatrixXd sigma_matrix(double tau) const;
  [[nodiscard]] BiasCurve bias_curve(const sqe::TauGrid& levels) const;
  [[nodiscard]] AsymptoticVariances asymptotic_variances(const taustep::MomentFamilySpec& family) const;
  /// Same with an explicit list of exponent tuples.
  [[nodiscard]] AsymptoticVariances asymptotic_variances(
      const std::vector<std::vector<int>>& members, taustep::Transform transform) const;
  [[nodiscard]] IdentificationReport verify_identification(const taustep::MomentFamilySpec& family,
                                                           const sqe::TauGrid& grid) const;
  [[nodiscard]] IdentificationReport verify_identification(
      const std::vector<std::vector<int>>& members, taustep::Transform transform,
      const sqe::TauGrid& grid) const;
  /// g~(tau; w~_l) = E[w~_l (tau - F(delta0(tau)' Z))] for every member, with MC SE.
  [[nodiscard]] VectorEstimate gtilde(const std::vector<std::vector<int>>& members,
                                      taustep::Transform transform, double tau) const;
  /// Population objective sum_l g~_l(tau)^2 for the family.
  [[nodiscard]] double population_objective(const taustep::MomentFamilySpec& family,
                                            double tau) const;

 private:
  struct Draws {
    Eigen::MatrixXd Z;       // N x k
    Eigen::VectorXd w;       // N
    Eigen::VectorXd sigma;   // N
  };

  // Per-path s-integrated contributions h_i = sum_s c_s v(s, i) of a vector
  // integrand; returns the N x m matrix of contributions.
  template <class F>
  Eigen::MatrixXd per_path(Eigen::Index m, F&& integrand) const;
  // Fixed-order sum over all (s, path) of c_s * integrand(s, i) / N.
  template <class F>
  Eigen::MatrixXd reduce(Eigen::Index rows, Eigen::Index cols, F&& integrand) const;
  [[nodiscard]] Eigen::MatrixXd jacobian_raw(const Eigen::VectorXd& x) const;
  [[nodiscard]] Eigen::VectorXd g_value(const Eigen::VectorXd& x, double tau) const;
  [[nodiscard]] double member_value(std::size_t s, Eigen::Index i, const std::vector<int>& e,
                                    taustep::Transform transform) const;
  [[nodiscard]] Eigen::VectorXd member_scale(const std::vector<std::vector<int>>& members,
                                             taustep::Transform transform) const;
  struct DerivativeBlock {
    Eigen::VectorXd value, se, analytic, gtilde0;
    Eigen::MatrixXd b;
    Eigen::VectorXd delta0_prime;
    Eigen::MatrixXd Sigma;
  };
  [[nodiscard]] DerivativeBlock gtilde_derivative(const std::vector<std::vector<int>>& members,
                                                  taustep::Transform transform) const;
  [[nodiscard]] std::vector<std::vector<int>> members_for(const taustep::MomentFamilySpec& f) const;

  ParametricNoiseModel model_;
  OracleConfig config_;
  Eigen::Index k_ = 0;
  std::size_t p_ = 0;
  double tau0_ = 0.5;
  std::vector<double> c_;  // trapezoid weights
  std::vector<Draws> draws_;
};

// Free-function entry points; each builds an oracle for the call.
[[nodiscard]] VectorEstimate g_function(const Eigen::VectorXd& x, double tau,
                                        const ParametricNoiseModel& model,
                                        const OracleConfig& config);
[[nodiscard]] Eigen::MatrixXd g_jacobian(const Eigen::VectorXd& x, double tau,
                                         const ParametricNoiseModel& model,
                                         const OracleConfig& config);
[[nodiscard]] BiasSolution solve_bias(double tau, const ParametricNoiseModel& model,
                                      const OracleConfig& config);
[[nodiscard]] VectorEstimate bias_derivative_at_tau0(const ParametricNoiseModel& model,
                                                     const OracleConfig& config);
[[nodiscard]] Eigen::MatrixXd sigma_matrix(double tau, const ParametricNoiseModel& model,
                                           const OracleConfig& config);
[[nodiscard]] AsymptoticVariances asymptotic_variances(const ParametricNoiseModel& model,
                                                       const taustep::MomentFamilySpec& family,
                                                       const OracleConfig& config);
[[nodiscard]] IdentificationReport verify_identification(const ParametricNoiseModel& model,
                                                         const taustep::MomentFamilySpec& family,
                                                         const sqe::TauGrid& grid,
                                                         const OracleConfig& config);

/// CSV `tau,delta0_0,...,delta0_{k-1},se_0,...,se_{k-1}`.
void write_bias_curve_csv(std::ostream& os, const BiasCurve& curve);
[[nodiscard]] nlohmann::json to_json(const BiasCurve& curve);
[[nodiscard]] nlohmann::json to_json(const AsymptoticVariances& av);
[[nodiscard]] nlohmann::json to_json(const IdentificationReport& rep);

}  // namespace tsqr::oracle
