#pragma once

// Synthetic AR(p) series with skewed, heavy-tailed, conditionally
// heteroscedastic and optionally time-varying noise
//
//   y_t = mu + sum_j phi_j y_{t-j} + eps_t,   eps_t = eta_t * sigma_t,
//   sigma_t^2 = omega(t/n) + (a1 * eta_{t-1}^2 + b1) * sigma_{t-1}^2.
//
// The innovations eta_t are deliberately NOT centred: their zero-crossing
// level tau0 = P(eta <= 0) is what the two-step estimator recovers.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"
#include "tsqr/rng.hpp"

namespace tsqr::dgp {

/// AR parameter (mu, phi_1..phi_p); `intercept` is empty in intercept-free mode.
struct ThetaVector {
  std::optional<double> intercept;
  std::vector<double> ar_coeffs;

  [[nodiscard]] std::size_t order() const noexcept { return ar_coeffs.size(); }
  [[nodiscard]] bool has_intercept() const noexcept { return intercept.has_value(); }
  /// Length of the regression coefficient vector (p + 1, or p when intercept-free).
  [[nodiscard]] std::size_t dim() const noexcept { return order() + (has_intercept() ? 1 : 0); }

  /// Coefficients in design-column order: intercept first when present.
  [[nodiscard]] Eigen::VectorXd coefficients() const;
  [[nodiscard]] static ThetaVector from_coefficients(const Eigen::VectorXd& coef, bool intercept);

  void validate() const;
};

/// True iff every root of 1 - sum_j phi_j z^j lies outside the closed unit disc
/// (modulus > 1 + 1e-10). Throws InvalidInput on non-finite coefficients.
[[nodiscard]] bool check_stationarity(const ThetaVector& theta);

/// Moduli of the roots of 1 - sum_j phi_j z^j, from companion-matrix eigenvalues.
/// Roots at infinity (zero eigenvalues) are omitted.
[[nodiscard]] std::vector<double> ar_root_moduli(const ThetaVector& theta);

enum class InnovationFamily { normal, shifted_exponential, student_t, skewed_mixture };

/// Innovation law. Every family is written eta = X - shift where X is
///  - normal:              N(0, 1)
///  - shifted_exponential: Exp(1)           (so shift = 1 gives eta = E - 1)
///  - student_t:           t(df)
///  - skewed_mixture:      -left_scale*|V| with probability left_prob, else
///                         +right_scale*|V|; V ~ N(0,1), or t(1.5) when heavy_tail.
/// The mixture has a positive density on the whole line and, with shift = 0,
/// tau0 = left_prob exactly.
struct InnovationSpec {
  InnovationFamily family = InnovationFamily::normal;
  double shift = 0.0;
  double df = 0.0;
  double left_scale = 1.0;
  double right_scale = 1.0;
  double left_prob = 0.5;
  bool heavy_tail = false;

  static InnovationSpec normal(double shift = 0.0);
  static InnovationSpec shifted_exponential(double shift = 1.0);
  static InnovationSpec student_t(double df, double shift = 0.0);
  static InnovationSpec skewed_mixture(double left_scale, double right_scale, double left_prob,
                                       bool heavy_tail, double shift = 0.0);

  void validate() const;
  /// Symmetric about zero (normal / student_t with shift 0, balanced mixture).
  [[nodiscard]] bool symmetric() const noexcept;
};

[[nodiscard]] double innovation_cdf(const InnovationSpec& spec, double u);
[[nodiscard]] double innovation_pdf(const InnovationSpec& spec, double u);
/// Derivative of the density; diagnostics only.
[[nodiscard]] double innovation_pdf_derivative(const InnovationSpec& spec, double u);

/// P(eta <= 0).
[[nodiscard]] double innovation_tau0(const InnovationSpec& spec);

/// Draws eta from a caller-owned engine.
class InnovationSampler {
 public:
  explicit InnovationSampler(InnovationSpec spec);
  double operator()(rng::Engine& eng);
  [[nodiscard]] const InnovationSpec& spec() const noexcept { return spec_; }

 private:
  InnovationSpec spec_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::exponential_distribution<double> exponential_{1.0};
  std::student_t_distribution<double> student_{1.0};
};

enum class OmegaShape { constant, linear, sine };

/// sigma_t^2 = omega(x) + (arch * eta_{t-1}^2 + garch) * sigma_{t-1}^2 with
///  constant: omega(x) = omega0
///  linear:   omega(x) = omega0 + omega1 * x
///  sine:     omega(x) = omega0 * (1 + omega1 * sin(2 pi x)),  |omega1| < 1
struct VolatilitySpec {
  OmegaShape shape = OmegaShape::constant;
  double omega0 = 1.0;
  double omega1 = 0.0;
  double arch = 0.0;
  double garch = 0.0;

  static VolatilitySpec constant(double omega, double arch = 0.0, double garch = 0.0);

  [[nodiscard]] double omega(double x) const noexcept;
  [[nodiscard]] bool time_varying() const noexcept { return shape != OmegaShape::constant; }
  /// sigma_0^2 = omega(0) / (1 - garch) when garch < 1, else omega(0).
  [[nodiscard]] double initial_variance() const noexcept;
  void validate() const;
};

struct SeriesSample {
  std::vector<double> values;
  ThetaVector theta_true;
  InnovationSpec innovation;
  VolatilitySpec volatility;
  double tau0_true = 0.5;
  std::uint64_t seed = 0;
  std::size_t burn_in = 500;
};

inline constexpr std::size_t kDefaultBurnIn = 500;

/// Deterministic in (theta, innov, vol, n, burn_in, seed). Burn-in steps use
/// time ratio 0; retained step t (1-based) uses t / n.
[[nodiscard]] SeriesSample simulate_series(const ThetaVector& theta, const InnovationSpec& innov,
                                           const VolatilitySpec& vol, std::size_t n,
                                           std::size_t burn_in, std::uint64_t seed);

/// Named data-generating process.
struct DgpSpec {
  std::string id;
  std::string description;
  ThetaVector theta;
  InnovationSpec innovation;
  VolatilitySpec volatility;

  [[nodiscard]] SeriesSample simulate(std::size_t n, std::uint64_t seed,
                                      std::size_t burn_in = kDefaultBurnIn) const {
    return simulate_series(theta, innovation, volatility, n, burn_in, seed);
  }
};

/// The built-in DGP menu:
///  asym_arch    mu=0.1, phi=0.5, eta = E-1, ARCH(1) omega=0.2, a1=0.3
///  asym_tvarch  as asym_arch with omega(x) = 0.2 (1 + 0.7 sin 2 pi x) and a1 = 1.2
///  sym_garch    no intercept, phi=0.5, eta ~ t(3), GARCH(1,1) omega=0.1, a1=0.1, b1=0.8
///  skew_heavy   mu=0.1, phi=(0.4, 0.2), half-t(1.5) mixture, omega(x) = 0.1 + 0.1x, a1=0.1, b1=0.3
///  iid_normal   mu=0, phi=0, eta ~ N(0,1), constant volatility
[[nodiscard]] const std::vector<DgpSpec>& dgp_menu();
[[nodiscard]] const DgpSpec& find_dgp(std::string_view id);
[[nodiscard]] std::string default_asymmetric_dgp();

// JSON forms (used in sidecars, configs and manifests).
void to_json(nlohmann::json& j, const ThetaVector& v);
void from_json(const nlohmann::json& j, ThetaVector& v);
void to_json(nlohmann::json& j, const InnovationSpec& v);
void from_json(const nlohmann::json& j, InnovationSpec& v);
void to_json(nlohmann::json& j, const VolatilitySpec& v);
void from_json(const nlohmann::json& j, VolatilitySpec& v);
void to_json(nlohmann::json& j, const DgpSpec& v);
void from_json(const nlohmann::json& j, DgpSpec& v);
/// Sidecar record for a simulated series (everything but the values).
[[nodiscard]] nlohmann::json sidecar_json(const SeriesSample& s);

}  // namespace tsqr::dgp
