#include "tsqr/dgp.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <sstream>

#include <Eigen/Eigenvalues>
#include <boost/math/distributions/students_t.hpp>

#include "tsqr/errors.hpp"

namespace tsqr::dgp {

namespace {

constexpr double kOverflowGuard = 1e300;

double std_normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }
double std_normal_pdf(double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi); }

double t_cdf(double df, double x) {
  return boost::math::cdf(boost::math::students_t_distribution<double>(df), x);
}
double t_pdf(double df, double x) {
  return boost::math::pdf(boost::math::students_t_distribution<double>(df), x);
}

constexpr double kMixtureHeavyDf = 1.5;

// CDF / density of the symmetric base variable V of the mixture.
double mixture_base_cdf(const InnovationSpec& s, double x) {
  return s.heavy_tail ? t_cdf(kMixtureHeavyDf, x) : std_normal_cdf(x);
}
double mixture_base_pdf(const InnovationSpec& s, double x) {
  return s.heavy_tail ? t_pdf(kMixtureHeavyDf, x) : std_normal_pdf(x);
}
double mixture_base_pdf_derivative(const InnovationSpec& s, double x) {
  if (s.heavy_tail) {
    const double df = kMixtureHeavyDf;
    return mixture_base_pdf(s, x) * (-(df + 1.0) * x / (df + x * x));
  }
  return -x * std_normal_pdf(x);
}

std::string family_name(InnovationFamily f) {
  switch (f) {
    case InnovationFamily::normal: return "normal";
    case InnovationFamily::shifted_exponential: return "shifted_exponential";
    case InnovationFamily::student_t: return "student_t";
    case InnovationFamily::skewed_mixture: return "skewed_mixture";
  }
  return "unknown";
}

InnovationFamily family_from_name(const std::string& name) {
  if (name == "normal") return InnovationFamily::normal;
  if (name == "shifted_exponential") return InnovationFamily::shifted_exponential;
  if (name == "student_t") return InnovationFamily::student_t;
  if (name == "skewed_mixture") return InnovationFamily::skewed_mixture;
  throw InvalidInput("unknown innovation family '" + name + "'");
}

std::string shape_name(OmegaShape s) {
  switch (s) {
    case OmegaShape::constant: return "constant";
    case OmegaShape::linear: return "linear";
    case OmegaShape::sine: return "sine";
  }
  return "unknown";
}

OmegaShape shape_from_name(const std::string& name) {
  if (name == "constant") return OmegaShape::constant;
  if (name == "linear") return OmegaShape::linear;
  if (name == "sine") return OmegaShape::sine;
  throw InvalidInput("unknown omega shape '" + name + "'");
}

}  // namespace

// ---------------------------------------------------------------------------
// ThetaVector

Eigen::VectorXd ThetaVector::coefficients() const {
  Eigen::VectorXd c(static_cast<Eigen::Index>(dim()));
  Eigen::Index k = 0;
  if (intercept) c(k++) = *intercept;
  for (double phi : ar_coeffs) c(k++) = phi;
  return c;
}

ThetaVector ThetaVector::from_coefficients(const Eigen::VectorXd& coef, bool with_intercept) {
  ThetaVector t;
  Eigen::Index k = 0;
  if (with_intercept) {
    if (coef.size() < 1) throw InvalidInput("coefficient vector is empty");
    t.intercept = coef(k++);
  }
  for (; k < coef.size(); ++k) t.ar_coeffs.push_back(coef(k));
  return t;
}

void ThetaVector::validate() const {
  if (ar_coeffs.empty()) throw InvalidInput("AR order p must be at least 1");
  if (intercept && !std::isfinite(*intercept)) throw InvalidInput("intercept is not finite");
  for (double phi : ar_coeffs) {
    if (!std::isfinite(phi)) throw InvalidInput("AR coefficient is not finite");
  }
}

std::vector<double> ar_root_moduli(const ThetaVector& theta) {
  theta.validate();
  const auto p = static_cast<Eigen::Index>(theta.order());
  // Companion matrix of lambda^p - phi_1 lambda^{p-1} - ... - phi_p; its
  // eigenvalues are the reciprocals of the roots z of 1 - sum phi_j z^j.
  Eigen::MatrixXd companion = Eigen::MatrixXd::Zero(p, p);
  for (Eigen::Index j = 0; j < p; ++j) companion(0, j) = theta.ar_coeffs[static_cast<std::size_t>(j)];
  for (Eigen::Index i = 1; i < p; ++i) companion(i, i - 1) = 1.0;
  Eigen::EigenSolver<Eigen::MatrixXd> es(companion, false);
  if (es.info() != Eigen::Success) throw NumericError("companion eigenvalue solver failed");

  std::vector<double> moduli;
  for (Eigen::Index i = 0; i < p; ++i) {
    const std::complex<double> lambda = es.eigenvalues()(i);
    if (std::abs(lambda) < 1e-300) continue;
    const std::complex<double> z = 1.0 / lambda;
    // Residual of the characteristic polynomial, scaled by |lambda|^p.
    std::complex<double> poly = 1.0;
    std::complex<double> zp = 1.0;
    for (Eigen::Index j = 0; j < p; ++j) {
      zp *= z;
      poly -= theta.ar_coeffs[static_cast<std::size_t>(j)] * zp;
    }
    const double scaled = std::abs(poly) * std::pow(std::abs(lambda), static_cast<double>(p));
    if (scaled > 1e-8) throw NumericError("AR root residual exceeds 1e-8");
    moduli.push_back(std::abs(z));
  }
  return moduli;
}

bool check_stationarity(const ThetaVector& theta) {
  const auto moduli = ar_root_moduli(theta);
  return std::all_of(moduli.begin(), moduli.end(), [](double m) { return m > 1.0 + 1e-10; });
}

// ---------------------------------------------------------------------------
// Innovations

InnovationSpec InnovationSpec::normal(double shift) {
  InnovationSpec s;
  s.family = InnovationFamily::normal;
  s.shift = shift;
  return s;
}

InnovationSpec InnovationSpec::shifted_exponential(double shift) {
  InnovationSpec s;
  s.family = InnovationFamily::shifted_exponential;
  s.shift = shift;
  return s;
}

InnovationSpec InnovationSpec::student_t(double df, double shift) {
  InnovationSpec s;
  s.family = InnovationFamily::student_t;
  s.df = df;
  s.shift = shift;
  return s;
}

InnovationSpec InnovationSpec::skewed_mixture(double left_scale, double right_scale,
                                              double left_prob, bool heavy_tail, double shift) {
  InnovationSpec s;
  s.family = InnovationFamily::skewed_mixture;
  s.left_scale = left_scale;
  s.right_scale = right_scale;
  s.left_prob = left_prob;
  s.heavy_tail = heavy_tail;
  s.shift = shift;
  return s;
}

void InnovationSpec::validate() const {
  if (!std::isfinite(shift)) throw InvalidInput("innovation shift is not finite");
  switch (family) {
    case InnovationFamily::normal: break;
    case InnovationFamily::shifted_exponential:
      if (shift <= 0.0) {
        throw InvalidInput("shifted_exponential needs shift > 0 so that P(eta <= 0) > 0");
      }
      break;
    case InnovationFamily::student_t:
      if (!(df > 0.0) || !std::isfinite(df)) throw InvalidInput("student_t needs df > 0");
      break;
    case InnovationFamily::skewed_mixture:
      if (!(left_scale > 0.0) || !(right_scale > 0.0) || !std::isfinite(left_scale) ||
          !std::isfinite(right_scale)) {
        throw InvalidInput("skewed_mixture needs positive finite scales");
      }
      if (!(left_prob > 0.0 && left_prob < 1.0)) {
        throw InvalidInput("skewed_mixture needs left_prob in (0, 1)");
      }
      break;
  }
}

bool InnovationSpec::symmetric() const noexcept {
  switch (family) {
    case InnovationFamily::normal:
    case InnovationFamily::student_t: return shift == 0.0;
    case InnovationFamily::shifted_exponential: return false;
    case InnovationFamily::skewed_mixture:
      return shift == 0.0 && left_prob == 0.5 && left_scale == right_scale;
  }
  return false;
}

double innovation_cdf(const InnovationSpec& s, double u) {
  const double v = u + s.shift;
  switch (s.family) {
    case InnovationFamily::normal: return std_normal_cdf(v);
    case InnovationFamily::shifted_exponential: return v <= 0.0 ? 0.0 : -std::expm1(-v);
    case InnovationFamily::student_t: return t_cdf(s.df, v);
    case InnovationFamily::skewed_mixture:
      if (v < 0.0) return 2.0 * s.left_prob * mixture_base_cdf(s, v / s.left_scale);
      return s.left_prob + (1.0 - s.left_prob) * (2.0 * mixture_base_cdf(s, v / s.right_scale) - 1.0);
  }
  return 0.0;
}

double innovation_pdf(const InnovationSpec& s, double u) {
  const double v = u + s.shift;
  switch (s.family) {
    case InnovationFamily::normal: return std_normal_pdf(v);
    case InnovationFamily::shifted_exponential: return v < 0.0 ? 0.0 : std::exp(-v);
    case InnovationFamily::student_t: return t_pdf(s.df, v);
    case InnovationFamily::skewed_mixture:
      if (v < 0.0) return 2.0 * s.left_prob * mixture_base_pdf(s, v / s.left_scale) / s.left_scale;
      return 2.0 * (1.0 - s.left_prob) * mixture_base_pdf(s, v / s.right_scale) / s.right_scale;
  }
  return 0.0;
}

double innovation_pdf_derivative(const InnovationSpec& s, double u) {
  const double v = u + s.shift;
  switch (s.family) {
    case InnovationFamily::normal: return -v * std_normal_pdf(v);
    case InnovationFamily::shifted_exponential: return v < 0.0 ? 0.0 : -std::exp(-v);
    case InnovationFamily::student_t: return t_pdf(s.df, v) * (-(s.df + 1.0) * v / (s.df + v * v));
    case InnovationFamily::skewed_mixture:
      if (v < 0.0) {
        return 2.0 * s.left_prob * mixture_base_pdf_derivative(s, v / s.left_scale) /
               (s.left_scale * s.left_scale);
      }
      return 2.0 * (1.0 - s.left_prob) * mixture_base_pdf_derivative(s, v / s.right_scale) /
             (s.right_scale * s.right_scale);
  }
  return 0.0;
}

double innovation_tau0(const InnovationSpec& spec) {
  spec.validate();
  return innovation_cdf(spec, 0.0);
}

InnovationSampler::InnovationSampler(InnovationSpec spec) : spec_(spec) {
  spec_.validate();
  if (spec_.family == InnovationFamily::student_t) {
    student_ = std::student_t_distribution<double>(spec_.df);
  } else if (spec_.family == InnovationFamily::skewed_mixture && spec_.heavy_tail) {
    student_ = std::student_t_distribution<double>(kMixtureHeavyDf);
  }
}

double InnovationSampler::operator()(rng::Engine& eng) {
  switch (spec_.family) {
    case InnovationFamily::normal: return normal_(eng) - spec_.shift;
    case InnovationFamily::shifted_exponential: return exponential_(eng) - spec_.shift;
    case InnovationFamily::student_t: return student_(eng) - spec_.shift;
    case InnovationFamily::skewed_mixture: {
      const double u = rng::uniform_open(eng);
      const double v = std::abs(spec_.heavy_tail ? student_(eng) : normal_(eng));
      const double m = u < spec_.left_prob ? -spec_.left_scale * v : spec_.right_scale * v;
      return m - spec_.shift;
    }
  }
  return 0.0;
}

// ---------------------------------------------------------------------------
// Volatility

VolatilitySpec VolatilitySpec::constant(double omega, double arch, double garch) {
  VolatilitySpec v;
  v.shape = OmegaShape::constant;
  v.omega0 = omega;
  v.arch = arch;
  v.garch = garch;
  return v;
}

double VolatilitySpec::omega(double x) const noexcept {
  switch (shape) {
    case OmegaShape::constant: return omega0;
    case OmegaShape::linear: return omega0 + omega1 * x;
    case OmegaShape::sine: return omega0 * (1.0 + omega1 * std::sin(2.0 * std::numbers::pi * x));
  }
  return omega0;
}

double VolatilitySpec::initial_variance() const noexcept {
  return garch < 1.0 ? omega(0.0) / (1.0 - garch) : omega(0.0);
}

void VolatilitySpec::validate() const {
  if (!std::isfinite(omega0) || !std::isfinite(omega1) || !std::isfinite(arch) ||
      !std::isfinite(garch)) {
    throw InvalidInput("volatility parameters must be finite");
  }
  if (arch < 0.0 || garch < 0.0) throw InvalidInput("ARCH/GARCH coefficients must be >= 0");
  if (!(omega0 > 0.0)) throw InvalidInput("omega0 must be positive");
  switch (shape) {
    case OmegaShape::constant: break;
    case OmegaShape::linear:
      if (!(omega0 + omega1 > 0.0)) throw InvalidInput("linear omega must stay positive on [0,1]");
      break;
    case OmegaShape::sine:
      if (!(std::abs(omega1) < 1.0)) throw InvalidInput("sine omega needs |omega1| < 1");
      break;
  }
}

// ---------------------------------------------------------------------------
// Simulation

SeriesSample simulate_series(const ThetaVector& theta, const InnovationSpec& innov,
                             const VolatilitySpec& vol, std::size_t n, std::size_t burn_in,
                             std::uint64_t seed) {
  theta.validate();
  vol.validate();
  if (n == 0) throw InvalidInput("series length must be positive");
  if (burn_in == 0) throw InvalidInput("burn-in must be positive");
  if (!check_stationarity(theta)) throw InvalidInput("AR polynomial has a root inside the unit circle");

  InnovationSampler draw(innov);
  rng::Engine eng = rng::make_stream(seed, {0x5e41e5ULL});

  const std::size_t p = theta.order();
  const double mu = theta.intercept.value_or(0.0);
  const std::size_t total = burn_in + n;
  std::vector<double> history(p, 0.0);  // history[j] = y_{t-1-j}

  SeriesSample out;
  out.values.reserve(n);
  double sigma2 = vol.initial_variance();
  double eta_prev = 0.0;
  for (std::size_t k = 0; k < total; ++k) {
    const double x =
        k < burn_in ? 0.0 : static_cast<double>(k - burn_in + 1) / static_cast<double>(n);
    if (k > 0) sigma2 = vol.omega(x) + (vol.arch * eta_prev * eta_prev + vol.garch) * sigma2;
    const double eta = draw(eng);
    double y = mu + std::sqrt(sigma2) * eta;
    for (std::size_t j = 0; j < p; ++j) y += theta.ar_coeffs[j] * history[j];
    if (!std::isfinite(y) || std::abs(y) > kOverflowGuard || !std::isfinite(sigma2)) {
      std::ostringstream msg;
      msg << "simulated value overflowed at step " << k;
      throw GenerationOverflow(k, msg.str());
    }
    if (p > 0) {
      std::rotate(history.rbegin(), history.rbegin() + 1, history.rend());
      history[0] = y;
    }
    eta_prev = eta;
    if (k >= burn_in) out.values.push_back(y);
  }

  out.theta_true = theta;
  out.innovation = innov;
  out.volatility = vol;
  out.tau0_true = innovation_tau0(innov);
  out.seed = seed;
  out.burn_in = burn_in;
  return out;
}

// ---------------------------------------------------------------------------
// DGP menu

const std::vector<DgpSpec>& dgp_menu() {
  static const std::vector<DgpSpec> menu = [] {
    std::vector<DgpSpec> m;

    DgpSpec asym;
    asym.id = "asym_arch";
    asym.description = "mu=0.1 phi=0.5; eta=E-1 (tau0=1-1/e); ARCH(1) omega=0.2 a1=0.3";
    asym.theta = ThetaVector{0.1, {0.5}};
    asym.innovation = InnovationSpec::shifted_exponential(1.0);
    asym.volatility = VolatilitySpec::constant(0.2, 0.3, 0.0);
    m.push_back(asym);

    DgpSpec tv = asym;
    tv.id = "asym_tvarch";
    tv.description = "asym_arch with omega(x)=0.2(1+0.7 sin 2 pi x), a1=1.2 (infinite variance)";
    tv.volatility.shape = OmegaShape::sine;
    tv.volatility.omega1 = 0.7;
    tv.volatility.arch = 1.2;
    m.push_back(tv);

    DgpSpec sym;
    sym.id = "sym_garch";
    sym.description = "no intercept, phi=0.5; eta~t(3); GARCH(1,1) omega=0.1 a1=0.1 b1=0.8";
    sym.theta = ThetaVector{std::nullopt, {0.5}};
    sym.innovation = InnovationSpec::student_t(3.0, 0.0);
    sym.volatility = VolatilitySpec::constant(0.1, 0.1, 0.8);
    m.push_back(sym);

    DgpSpec skew;
    skew.id = "skew_heavy";
    skew.description =
        "mu=0.1 phi=(0.4,0.2); half-t(1.5) mixture L=1 R=2 P(left)=0.4; omega(x)=0.1+0.1x a1=0.1 b1=0.3";
    skew.theta = ThetaVector{0.1, {0.4, 0.2}};
    skew.innovation = InnovationSpec::skewed_mixture(1.0, 2.0, 0.4, true);
    skew.volatility.shape = OmegaShape::linear;
    skew.volatility.omega0 = 0.1;
    skew.volatility.omega1 = 0.1;
    skew.volatility.arch = 0.1;  // E log(b1 + a1 eta^2) is about -0.26
    skew.volatility.garch = 0.3;
    m.push_back(skew);

    DgpSpec iid;
    iid.id = "iid_normal";
    iid.description = "mu=0 phi=0; eta~N(0,1); constant unit volatility (tau0 not identified)";
    iid.theta = ThetaVector{0.0, {0.0}};
    iid.innovation = InnovationSpec::normal(0.0);
    iid.volatility = VolatilitySpec::constant(1.0);
    m.push_back(iid);
    return m;
  }();
  return menu;
}

const DgpSpec& find_dgp(std::string_view id) {
  for (const auto& d : dgp_menu()) {
    if (d.id == id) return d;
  }
  throw InvalidInput("unknown DGP id '" + std::string(id) + "'");
}

std::string default_asymmetric_dgp() { return "asym_tvarch"; }

// ---------------------------------------------------------------------------
// JSON

void to_json(nlohmann::json& j, const ThetaVector& v) {
  j = nlohmann::json{{"ar_coeffs", v.ar_coeffs}};
  j["intercept"] = v.intercept ? nlohmann::json(*v.intercept) : nlohmann::json(nullptr);
}

void from_json(const nlohmann::json& j, ThetaVector& v) {
  v.ar_coeffs = j.at("ar_coeffs").get<std::vector<double>>();
  if (j.contains("intercept") && !j.at("intercept").is_null()) {
    v.intercept = j.at("intercept").get<double>();
  } else {
    v.intercept.reset();
  }
}

void to_json(nlohmann::json& j, const InnovationSpec& v) {
  j = nlohmann::json{{"family", family_name(v.family)}, {"shift", v.shift}};
  switch (v.family) {
    case InnovationFamily::student_t: j["df"] = v.df; break;
    case InnovationFamily::skewed_mixture:
      j["left_scale"] = v.left_scale;
      j["right_scale"] = v.right_scale;
      j["left_prob"] = v.left_prob;
      j["heavy_tail"] = v.heavy_tail;
      break;
    default: break;
  }
}

void from_json(const nlohmann::json& j, InnovationSpec& v) {
  v = InnovationSpec{};
  v.family = family_from_name(j.at("family").get<std::string>());
  v.shift = j.value("shift", v.family == InnovationFamily::shifted_exponential ? 1.0 : 0.0);
  v.df = j.value("df", 0.0);
  v.left_scale = j.value("left_scale", 1.0);
  v.right_scale = j.value("right_scale", 1.0);
  v.left_prob = j.value("left_prob", 0.5);
  v.heavy_tail = j.value("heavy_tail", false);
  v.validate();
}

void to_json(nlohmann::json& j, const VolatilitySpec& v) {
  j = nlohmann::json{{"shape", shape_name(v.shape)}, {"omega0", v.omega0}, {"omega1", v.omega1},
                     {"arch", v.arch},           {"garch", v.garch}};
}

void from_json(const nlohmann::json& j, VolatilitySpec& v) {
  v = VolatilitySpec{};
  v.shape = shape_from_name(j.value("shape", std::string("constant")));
  v.omega0 = j.value("omega0", 1.0);
  v.omega1 = j.value("omega1", 0.0);
  v.arch = j.value("arch", 0.0);
  v.garch = j.value("garch", 0.0);
  v.validate();
}

void to_json(nlohmann::json& j, const DgpSpec& v) {
  j = nlohmann::json{{"id", v.id},
                     {"description", v.description},
                     {"theta", v.theta},
                     {"innovation", v.innovation},
                     {"volatility", v.volatility}};
}

void from_json(const nlohmann::json& j, DgpSpec& v) {
  v.id = j.value("id", std::string("custom"));
  v.description = j.value("description", std::string());
  v.theta = j.at("theta").get<ThetaVector>();
  v.innovation = j.at("innovation").get<InnovationSpec>();
  v.volatility = j.at("volatility").get<VolatilitySpec>();
}

nlohmann::json sidecar_json(const SeriesSample& s) {
  return nlohmann::json{{"n", s.values.size()},
                        {"burn_in", s.burn_in},
                        {"seed", s.seed},
                        {"tau0_true", s.tau0_true},
                        {"theta_true", s.theta_true},
                        {"innovation", s.innovation},
                        {"volatility", s.volatility}};
}

}  // namespace tsqr::dgp
