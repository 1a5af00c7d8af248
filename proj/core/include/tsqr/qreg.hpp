#pragma once

// Weighted linear quantile regression:
//
//   minimize  (n - p)^{-1} sum_t w_t rho_tau(y_t - Z_{t-1}' theta),
//   rho_tau(x) = x (tau - I(x <= 0)).
//
// A Mehrotra predictor-corrector interior point method on the bounded dual
// LP gets within the duality-gap tolerance; an exact descent over basic
// solutions then lands on an optimal vertex and proves optimality. Warm
// starts skip the interior point and descend from a previous vertex.

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "tsqr/dgp.hpp"

namespace tsqr::qreg {

[[nodiscard]] constexpr double psi(double tau, double x) noexcept {
  return x <= 0.0 ? tau - 1.0 : tau;
}

[[nodiscard]] constexpr double pinball(double tau, double x) noexcept { return x * psi(tau, x); }

/// Regressor rows Z_{t-1} = (1, y_{t-1}, ..., y_{t-p}) (no leading 1 in
/// intercept-free mode) against responses y_t, t = p+1..n.
struct LaggedDesign {
  Eigen::MatrixXd rows;       // (n - p) x dim
  Eigen::VectorXd responses;  // n - p
  Eigen::MatrixXd lags;       // (n - p) x p, column i-1 holds y_{t-i}
  std::size_t p = 0;
  bool intercept = true;
  std::size_t series_length = 0;

  [[nodiscard]] Eigen::Index size() const noexcept { return responses.size(); }
  [[nodiscard]] Eigen::Index dim() const noexcept { return rows.cols(); }

  /// Rows kept in the given (increasing) order.
  [[nodiscard]] LaggedDesign subset(std::span<const Eigen::Index> keep) const;
};

/// Throws InvalidInput unless n > p + (p + 2).
[[nodiscard]] LaggedDesign build_design(std::span<const double> y, std::size_t p, bool intercept);
[[nodiscard]] LaggedDesign build_design(const dgp::SeriesSample& series, std::size_t p,
                                        bool intercept);

enum class WeightFamily { unit, power, exp_power };

/// Self-weights built from the lags:
///   power(k):     w_t = prod_i (1 + |y_{t-i}|^k)^{-1}
///   exp_power(k): w_t = prod_i (1 + exp(|y_{t-i}|^k))^{-1}
/// Both are sign-symmetric in each lag and lie in (0, 1].
struct WeightSpec {
  WeightFamily family = WeightFamily::power;
  double k = 2.0;

  static WeightSpec unit() { return {WeightFamily::unit, 1.0}; }
  static WeightSpec power(double k) { return {WeightFamily::power, k}; }
  static WeightSpec exp_power(double k) { return {WeightFamily::exp_power, k}; }

  void validate() const;
  /// Weight for one lag vector (y_{t-1}, ..., y_{t-p}). The time ratio is
  /// accepted for interface completeness; the built-in families ignore it.
  [[nodiscard]] double evaluate(std::span<const double> lags, double time_ratio = 0.0) const;
};

[[nodiscard]] Eigen::VectorXd eval_weights(const WeightSpec& spec, const LaggedDesign& design);

/// Parses "unit", "power:k" or "exp_power:k".
[[nodiscard]] WeightSpec parse_weight_spec(const std::string& text);
[[nodiscard]] std::string format_weight_spec(const WeightSpec& spec);
void to_json(nlohmann::json& j, const WeightSpec& w);
void from_json(const nlohmann::json& j, WeightSpec& w);

struct SolverOptions {
  double gap_tol = 1e-9;   // relative duality gap for the interior point phase
  int max_iter = 100;      // interior point iterations
  int max_pivots = 0;      // vertex-descent pivots; 0 means 50 + 10 * rows
  bool check_rank = true;
};

enum class SolveRoute { interior_point, smoothing_homotopy, warm_descent };

struct Certificate {
  Eigen::VectorXd subgradient;  // s = sum over inactive rows of w Z psi(r)
  Eigen::VectorXd bound;        // sum over active rows of w |Z| max(tau, 1-tau) + 1e-6 scale
  std::size_t active_count = 0;
  bool ok = false;
};

struct QrSolution {
  Eigen::VectorXd theta_hat;
  double objective = 0.0;  // (n - p)^{-1} sum w rho at theta_hat
  double subgradient_norm_certificate = 0.0;  // max_j (|s_j| - bound_j), <= 0 when certified
  std::size_t active_count = 0;
  int iterations = 0;  // interior point iterations + descent pivots
  bool converged = false;
  std::vector<Eigen::Index> basis;  // rows interpolated by theta_hat
  SolveRoute route = SolveRoute::interior_point;
};

/// Zero tolerance used to call a residual "active": 1e-8 (1 + |y_t|).
[[nodiscard]] inline double zero_tol(double y) noexcept { return 1e-8 * (1.0 + std::abs(y)); }

[[nodiscard]] double weighted_loss(const LaggedDesign& design, const Eigen::VectorXd& weights,
                                   double tau, const Eigen::VectorXd& theta);

/// Componentwise subgradient certificate: |s_j| <= sum_{active} w |Z_j| max(tau,1-tau) + 1e-6 scale_j,
/// scale_j = sum_t w_t |Z_tj|.
[[nodiscard]] Certificate check_certificate(const LaggedDesign& design,
                                            const Eigen::VectorXd& weights, double tau,
                                            const Eigen::VectorXd& theta);

/// Global minimizer of the weighted pinball loss. `warm_basis` (rows of a
/// previous optimal vertex) switches to the warm-started descent.
/// Throws InvalidInput, RankError, or NoConvergence (carrying the best iterate).
[[nodiscard]] QrSolution solve_wqr(const LaggedDesign& design, const Eigen::VectorXd& weights,
                                   double tau, const SolverOptions& opts = {},
                                   const std::vector<Eigen::Index>* warm_basis = nullptr);

/// Throws RankError naming the dependent columns when diag(w) Z is rank deficient
/// (pivoted QR, relative threshold 1e-10).
void check_full_rank(const LaggedDesign& design, const Eigen::VectorXd& weights);

/// Process-wide solve statistics (diagnostics only).
struct SolveStats {
  std::size_t solves = 0;
  std::size_t certificate_failures = 0;
  std::size_t interior_point = 0;
  std::size_t homotopy = 0;
  std::size_t warm = 0;
};
[[nodiscard]] SolveStats solve_stats() noexcept;
void reset_solve_stats() noexcept;

namespace detail {

struct DescentResult {
  Eigen::VectorXd theta;
  std::vector<Eigen::Index> basis;
  int pivots = 0;
  bool optimal = false;
};

/// Exact descent over basic solutions of sum w_i rho_tau(y_i - z_i' theta),
/// starting from an arbitrary point (purified to a vertex first) or from a basis.
[[nodiscard]] DescentResult vertex_descent(const Eigen::MatrixXd& Z, const Eigen::VectorXd& y,
                                           const Eigen::VectorXd& w, double tau,
                                           const Eigen::VectorXd& start,
                                           const std::vector<Eigen::Index>* start_basis,
                                           int max_pivots);

struct InteriorPointResult {
  Eigen::VectorXd theta;
  int iterations = 0;
  double gap = 0.0;
  bool converged = false;
  bool finite = true;
};

/// Frisch-Newton interior point with Mehrotra predictor-corrector steps on the
/// dual  max y~'a  s.t.  X~'a = (1 - tau) X~'1,  0 <= a <= 1,  X~ = diag(w) Z.
[[nodiscard]] InteriorPointResult interior_point(const Eigen::MatrixXd& Z,
                                                 const Eigen::VectorXd& y,
                                                 const Eigen::VectorXd& w, double tau,
                                                 double gap_tol, int max_iter);

/// Huberized pinball minimization with half-width h in {1e-2, 1e-4, 1e-6}.
[[nodiscard]] Eigen::VectorXd smoothing_homotopy(const Eigen::MatrixXd& Z,
                                                 const Eigen::VectorXd& y,
                                                 const Eigen::VectorXd& w, double tau,
                                                 const Eigen::VectorXd& start);

}  // namespace detail

}  // namespace tsqr::qreg
