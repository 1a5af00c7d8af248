#pragma once

// Second step: moment matching over the quantile level.
//
//   m_l(tau) = (n - p)^{-1} sum_t w~_lt psi_tau(y_t - Z_{t-1}' theta_hat(tau))
//   Q(tau)   = sum_l m_l(tau)^2,     tau_hat = argmin_grid+refinement Q.
//
// The family w~_lt = w~_0t * prod_i t(y_{t-i})^{d_i} uses a bounded
// one-to-one transform t and all exponent tuples with total degree <= d0.

#include <iosfwd>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"
#include "tsqr/qreg.hpp"
#include "tsqr/sqe.hpp"

namespace tsqr::taustep {

enum class Transform { algebraic, arctangent };

/// algebraic: y / sqrt(1 + y^2);  arctangent: (2 / pi) atan(y).
[[nodiscard]] double apply_transform(Transform t, double y) noexcept;

struct MomentFamilySpec {
  int d0 = 2;
  int p_tilde = 0;  // 0 means "use p"
  Transform transform = Transform::algebraic;
};

struct MomentWeightFamily {
  qreg::WeightSpec base;
  Transform transform = Transform::algebraic;
  int max_degree = 2;
  int lags = 1;
  std::vector<std::vector<int>> members;  // exponent tuples, all-zero tuple first
  Eigen::MatrixXd values;                 // rows x L, values(t, l) = w~_lt

  [[nodiscard]] std::size_t size() const noexcept { return members.size(); }
};

/// Exponent tuples of length p_tilde with entries in [0, d0] and total degree <= d0,
/// in graded order (degree 0, then 1, ...), lexicographically descending inside a degree.
[[nodiscard]] std::vector<std::vector<int>> enumerate_members(int d0, int p_tilde);

[[nodiscard]] MomentWeightFamily build_moment_family(const qreg::LaggedDesign& design,
                                                     const qreg::WeightSpec& base, int d0,
                                                     int p_tilde,
                                                     Transform transform = Transform::algebraic);

/// Family with the base weight supplied per row.
[[nodiscard]] MomentWeightFamily build_moment_family(const qreg::LaggedDesign& design,
                                                     const Eigen::VectorXd& base_values,
                                                     const qreg::WeightSpec& base, int d0,
                                                     int p_tilde, Transform transform);

/// m_l(tau) = norm^{-1} sum_t values(t, l) psi_tau(y_t - Z_t' theta); norm defaults to the row count.
/// Residuals within qreg::zero_tol count as exactly zero.
[[nodiscard]] Eigen::VectorXd residual_moments(const qreg::LaggedDesign& design,
                                               const Eigen::MatrixXd& values,
                                               const Eigen::VectorXd& theta, double tau,
                                               double norm = 0.0);

struct CurvePoint {
  double tau = 0.0;
  double objective = 0.0;
  bool refinement = false;  // golden-section probe rather than grid level
};

struct TauEstimate {
  double tau_hat = 0.0;
  double objective = 0.0;
  std::vector<CurvePoint> objective_curve;  // grid levels then probes, in evaluation order
  int refine_iterations = 0;
  bool boundary_flag = false;
  std::string warning;
  qreg::QrSolution solution;  // theta_hat(tau_hat) from the probe that attained the minimum
};

/// Grid argmin (ties to the smallest tau), then golden-section search on the
/// bracket formed by the neighbouring grid levels until its width < refine_tol.
/// `norm` is the moment normalization (0 means the design row count).
[[nodiscard]] TauEstimate estimate_tau(const sqe::QuantilePath& path, const Eigen::MatrixXd& values,
                                       double refine_tol = 1e-4, double norm = 0.0);
[[nodiscard]] TauEstimate estimate_tau(const sqe::QuantilePath& path,
                                       const MomentWeightFamily& family, double refine_tol = 1e-4);

struct TwoStepConfig {
  std::size_t p = 1;
  bool intercept = true;
  qreg::WeightSpec weight = qreg::WeightSpec::power(2.0);
  sqe::TauGrid grid = sqe::TauGrid::make();
  MomentFamilySpec family{};
  double refine_tol = 1e-4;
  sqe::PathOptions path{};

  void validate() const;
};

struct TwoStepEstimate {
  double tau_hat = 0.0;
  Eigen::VectorXd theta_hat;
  double objective = 0.0;
  std::vector<CurvePoint> objective_curve;
  int refine_iterations = 0;
  bool boundary_flag = false;
  std::string warning;
  qreg::QrSolution final_solution;  // fresh cold solve at tau_hat
  std::size_t n = 0;
  std::size_t rows = 0;
  std::size_t family_size = 0;
};

/// Failure inside one stage of the two-step pipeline; `stage()` names it.
class StageFailure : public NumericError {
 public:
  StageFailure(std::string stage, const std::string& what)
      : NumericError(stage + ": " + what), stage_(std::move(stage)) {}
  [[nodiscard]] const std::string& stage() const noexcept { return stage_; }

 private:
  std::string stage_;
};

[[nodiscard]] TwoStepEstimate two_step(std::span<const double> series, const TwoStepConfig& config);
[[nodiscard]] TwoStepEstimate two_step(const dgp::SeriesSample& series, const TwoStepConfig& config);

/// Both steps on a prepared design: `weights` drive the first step, `values`
/// hold the moment family, `norm` normalizes the moments.
[[nodiscard]] TwoStepEstimate two_step_on(std::shared_ptr<const qreg::LaggedDesign> design,
                                          Eigen::VectorXd weights, const Eigen::MatrixXd& values,
                                          double norm, const TwoStepConfig& config);

[[nodiscard]] nlohmann::json to_json(const TwoStepEstimate& est);
/// CSV `tau,objective,refinement`, sorted by tau.
void write_objective_csv(std::ostream& os, const std::vector<CurvePoint>& curve);

void to_json(nlohmann::json& j, const TwoStepConfig& c);
void from_json(const nlohmann::json& j, TwoStepConfig& c);

}  // namespace tsqr::taustep
