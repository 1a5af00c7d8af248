#include "tsqr/qreg.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <sstream>
#include <string>

#include "tsqr/errors.hpp"

namespace tsqr::qreg {

namespace {

std::atomic<std::size_t> g_solves{0};
std::atomic<std::size_t> g_cert_failures{0};
std::atomic<std::size_t> g_ip{0};
std::atomic<std::size_t> g_homotopy{0};
std::atomic<std::size_t> g_warm{0};

void validate_problem(const LaggedDesign& design, const Eigen::VectorXd& weights, double tau) {
  if (!(tau > 0.0 && tau < 1.0)) throw InvalidInput("tau must lie in (0, 1)");
  if (weights.size() != design.size()) throw InvalidInput("weight count does not match design rows");
  if (design.size() < design.dim()) throw InvalidInput("fewer rows than coefficients");
  for (Eigen::Index i = 0; i < weights.size(); ++i) {
    if (!(weights[i] > 0.0) || !std::isfinite(weights[i])) {
      throw InvalidInput("weights must be positive and finite");
    }
  }
  if (!design.rows.allFinite() || !design.responses.allFinite()) {
    throw InvalidInput("design contains non-finite values");
  }
}

}  // namespace

LaggedDesign LaggedDesign::subset(std::span<const Eigen::Index> keep) const {
  LaggedDesign out;
  const auto m = static_cast<Eigen::Index>(keep.size());
  out.rows.resize(m, dim());
  out.responses.resize(m);
  out.lags.resize(m, lags.cols());
  for (Eigen::Index i = 0; i < m; ++i) {
    const Eigen::Index src = keep[static_cast<std::size_t>(i)];
    if (src < 0 || src >= size()) throw InvalidInput("subset index out of range");
    out.rows.row(i) = rows.row(src);
    out.responses[i] = responses[src];
    out.lags.row(i) = lags.row(src);
  }
  out.p = p;
  out.intercept = intercept;
  out.series_length = series_length;
  return out;
}

LaggedDesign build_design(std::span<const double> y, std::size_t p, bool intercept) {
  const std::size_t n = y.size();
  if (p < 1) throw InvalidInput("lag order p must be at least 1");
  if (n <= 2 * p + 1) {
    throw InvalidInput("series of length " + std::to_string(n) + " is too short for p = " +
                       std::to_string(p) + " (need n > 2p + 1)");
  }
  for (double v : y) {
    if (!std::isfinite(v)) throw InvalidInput("series contains non-finite values");
  }
  const auto m = static_cast<Eigen::Index>(n - p);
  const auto offset = intercept ? 1 : 0;
  LaggedDesign d;
  d.rows.resize(m, static_cast<Eigen::Index>(p) + offset);
  d.responses.resize(m);
  d.lags.resize(m, static_cast<Eigen::Index>(p));
  for (Eigen::Index i = 0; i < m; ++i) {
    const std::size_t t = static_cast<std::size_t>(i) + p;  // 0-based index of y_t
    d.responses[i] = y[t];
    if (intercept) d.rows(i, 0) = 1.0;
    for (std::size_t lag = 1; lag <= p; ++lag) {
      const double v = y[t - lag];
      d.lags(i, static_cast<Eigen::Index>(lag - 1)) = v;
      d.rows(i, static_cast<Eigen::Index>(lag - 1) + offset) = v;
    }
  }
  d.p = p;
  d.intercept = intercept;
  d.series_length = n;
  return d;
}

LaggedDesign build_design(const dgp::SeriesSample& series, std::size_t p, bool intercept) {
  return build_design(std::span<const double>(series.values), p, intercept);
}

void WeightSpec::validate() const {
  if (family != WeightFamily::unit && !(k > 0.0 && std::isfinite(k))) {
    throw InvalidInput("weight exponent k must be positive");
  }
}

double WeightSpec::evaluate(std::span<const double> lags, double /*time_ratio*/) const {
  switch (family) {
    case WeightFamily::unit:
      return 1.0;
    case WeightFamily::power: {
      double w = 1.0;
      for (double v : lags) w /= 1.0 + std::pow(std::abs(v), k);
      return w;
    }
    case WeightFamily::exp_power: {
      // log-space product; clamped so the weight stays strictly positive
      double log_w = 0.0;
      for (double v : lags) {
        const double e = std::pow(std::abs(v), k);
        log_w -= e > 40.0 ? e : std::log1p(std::exp(e));
      }
      return std::exp(std::max(log_w, -700.0));
    }
  }
  return 1.0;
}

Eigen::VectorXd eval_weights(const WeightSpec& spec, const LaggedDesign& design) {
  spec.validate();
  const Eigen::Index m = design.size();
  Eigen::VectorXd w(m);
  std::vector<double> lag(design.p);
  const double n = static_cast<double>(design.series_length);
  for (Eigen::Index i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < design.p; ++j) lag[j] = design.lags(i, static_cast<Eigen::Index>(j));
    const double ratio = n > 0 ? static_cast<double>(i + static_cast<Eigen::Index>(design.p) + 1) / n : 0.0;
    w[i] = spec.evaluate(lag, ratio);
  }
  return w;
}

WeightSpec parse_weight_spec(const std::string& text) {
  const auto colon = text.find(':');
  const std::string name = text.substr(0, colon);
  WeightSpec w;
  if (name == "unit") {
    if (colon != std::string::npos) throw InvalidInput("unit weight takes no exponent");
    return WeightSpec::unit();
  }
  if (name == "power") {
    w.family = WeightFamily::power;
  } else if (name == "exp_power") {
    w.family = WeightFamily::exp_power;
  } else {
    throw InvalidInput("unknown weight family '" + name + "'");
  }
  if (colon == std::string::npos) throw InvalidInput("weight '" + text + "' needs an exponent");
  try {
    std::size_t used = 0;
    const std::string arg = text.substr(colon + 1);
    w.k = std::stod(arg, &used);
    if (used != arg.size()) throw InvalidInput("bad weight exponent in '" + text + "'");
  } catch (const std::logic_error&) {
    throw InvalidInput("bad weight exponent in '" + text + "'");
  }
  w.validate();
  return w;
}

std::string format_weight_spec(const WeightSpec& spec) {
  std::ostringstream os;
  switch (spec.family) {
    case WeightFamily::unit:
      return "unit";
    case WeightFamily::power:
      os << "power:" << spec.k;
      break;
    case WeightFamily::exp_power:
      os << "exp_power:" << spec.k;
      break;
  }
  return os.str();
}

void to_json(nlohmann::json& j, const WeightSpec& w) {
  j = nlohmann::json{{"family", w.family == WeightFamily::unit    ? "unit"
                                : w.family == WeightFamily::power ? "power"
                                                                  : "exp_power"},
                     {"k", w.k}};
}

void from_json(const nlohmann::json& j, WeightSpec& w) {
  const std::string fam = j.at("family").get<std::string>();
  if (fam == "unit") {
    w = WeightSpec::unit();
    return;
  }
  w = parse_weight_spec(fam + ":" + std::to_string(j.at("k").get<double>()));
  w.k = j.at("k").get<double>();
}

double weighted_loss(const LaggedDesign& design, const Eigen::VectorXd& weights, double tau,
                     const Eigen::VectorXd& theta) {
  const Eigen::VectorXd r = design.responses - design.rows * theta;
  double acc = 0.0;
  for (Eigen::Index i = 0; i < r.size(); ++i) acc += weights[i] * pinball(tau, r[i]);
  return acc / static_cast<double>(design.size());
}

Certificate check_certificate(const LaggedDesign& design, const Eigen::VectorXd& weights, double tau,
                              const Eigen::VectorXd& theta) {
  const Eigen::Index k = design.dim();
  const Eigen::VectorXd r = design.responses - design.rows * theta;
  Certificate c;
  c.subgradient = Eigen::VectorXd::Zero(k);
  c.bound = Eigen::VectorXd::Zero(k);
  Eigen::VectorXd scale = Eigen::VectorXd::Zero(k);
  const double slack = std::max(tau, 1.0 - tau);
  for (Eigen::Index i = 0; i < r.size(); ++i) {
    const auto zi = design.rows.row(i).transpose();
    scale += weights[i] * zi.cwiseAbs();
    if (std::abs(r[i]) <= zero_tol(design.responses[i])) {
      c.bound += weights[i] * slack * zi.cwiseAbs();
      ++c.active_count;
    } else {
      c.subgradient += weights[i] * psi(tau, r[i]) * zi;
    }
  }
  c.bound += 1e-6 * scale;
  c.ok = (c.subgradient.cwiseAbs().array() <= c.bound.array()).all();
  return c;
}

void check_full_rank(const LaggedDesign& design, const Eigen::VectorXd& weights) {
  const Eigen::MatrixXd X = weights.asDiagonal() * design.rows;
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X);
  qr.setThreshold(1e-10);
  const Eigen::Index rank = qr.rank();
  if (rank < X.cols()) {
    std::vector<Eigen::Index> dependent;
    const auto& perm = qr.colsPermutation().indices();
    for (Eigen::Index j = rank; j < X.cols(); ++j) dependent.push_back(perm[j]);
    std::sort(dependent.begin(), dependent.end());
    std::ostringstream os;
    os << "weighted design is rank deficient (rank " << rank << " of " << X.cols()
       << "); dependent columns:";
    for (auto j : dependent) os << ' ' << j;
    throw RankError(dependent, os.str());
  }
}

QrSolution solve_wqr(const LaggedDesign& design, const Eigen::VectorXd& weights, double tau,
                     const SolverOptions& opts, const std::vector<Eigen::Index>* warm_basis) {
  validate_problem(design, weights, tau);
  if (opts.check_rank) check_full_rank(design, weights);
  ++g_solves;

  const Eigen::MatrixXd& Z = design.rows;
  const Eigen::VectorXd& y = design.responses;
  const int max_pivots = opts.max_pivots > 0 ? opts.max_pivots
                                             : 50 + 10 * static_cast<int>(design.size());
  QrSolution sol;
  detail::DescentResult dr;
  int ip_iterations = 0;

  bool warm_ok = false;
  if (warm_basis != nullptr && static_cast<Eigen::Index>(warm_basis->size()) == design.dim()) {
    try {
      dr = detail::vertex_descent(Z, y, weights, tau, Eigen::VectorXd::Zero(design.dim()), warm_basis,
                                  max_pivots);
      warm_ok = dr.optimal;
    } catch (const NumericError&) {
      warm_ok = false;
    }
  }
  if (warm_ok) {
    sol.route = SolveRoute::warm_descent;
    ++g_warm;
  } else {
    auto ip = detail::interior_point(Z, y, weights, tau, opts.gap_tol, opts.max_iter);
    ip_iterations = ip.iterations;
    Eigen::VectorXd start;
    if (ip.finite && ip.theta.allFinite() && (ip.converged || ip.gap < 1e-3)) {
      start = ip.theta;
      sol.route = SolveRoute::interior_point;
      ++g_ip;
    } else {
      const Eigen::VectorXd seed = ip.theta.allFinite() ? ip.theta
                                                        : Eigen::VectorXd::Zero(design.dim());
      start = detail::smoothing_homotopy(Z, y, weights, tau, seed);
      sol.route = SolveRoute::smoothing_homotopy;
      ++g_homotopy;
    }
    dr = detail::vertex_descent(Z, y, weights, tau, start, nullptr, max_pivots);
  }

  sol.theta_hat = dr.theta;
  sol.basis = dr.basis;
  sol.iterations = ip_iterations + dr.pivots;
  sol.objective = weighted_loss(design, weights, tau, sol.theta_hat);
  const Certificate cert = check_certificate(design, weights, tau, sol.theta_hat);
  sol.active_count = cert.active_count;
  sol.subgradient_norm_certificate =
      (cert.subgradient.cwiseAbs() - cert.bound).maxCoeff();
  sol.converged = dr.optimal && cert.ok;
  if (!cert.ok) ++g_cert_failures;
  if (!sol.converged) {
    std::vector<double> trace{sol.objective, sol.subgradient_norm_certificate};
    throw NoConvergence(sol.theta_hat, trace,
                        "quantile regression at tau = " + std::to_string(tau) +
                            " stopped without an optimality certificate");
  }
  return sol;
}

SolveStats solve_stats() noexcept {
  return {g_solves.load(), g_cert_failures.load(), g_ip.load(), g_homotopy.load(), g_warm.load()};
}

void reset_solve_stats() noexcept {
  g_solves = 0;
  g_cert_failures = 0;
  g_ip = 0;
  g_homotopy = 0;
  g_warm = 0;
}

}  // namespace tsqr::qreg
