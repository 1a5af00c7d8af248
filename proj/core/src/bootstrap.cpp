#include "tsqr/bootstrap.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include <boost/math/distributions/normal.hpp>
#include <boost/math/special_functions/gamma.hpp>

#include "tsqr/errors.hpp"
#include "tsqr/parallel.hpp"
#include "tsqr/series_io.hpp"

namespace tsqr::boot {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

constexpr std::uint64_t kMultiplierTag = 0xb0075;
constexpr double kLevels[] = {0.90, 0.95};

double quantile_sorted(const std::vector<double>& v, double q) {
  // linear interpolation between order statistics
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

}  // namespace

void BootstrapConfig::validate() const {
  if (replications < 2) throw InvalidInput("bootstrap needs at least two replications");
  if (!(max_skip_fraction >= 0.0 && max_skip_fraction < 1.0)) {
    throw InvalidInput("max_skip_fraction must lie in [0, 1)");
  }
}

std::vector<double> draw_multipliers(std::size_t n, rng::Engine& stream) {
  std::vector<double> out(n);
  for (auto& v : out) v = (stream() >> 63) != 0 ? 2.0 : 0.0;
  return out;
}

rng::Engine replication_stream(std::uint64_t seed, std::size_t j) {
  return rng::make_stream(seed, {kMultiplierTag, j});
}

std::vector<std::string> coefficient_names(std::size_t p, bool intercept) {
  std::vector<std::string> names;
  if (intercept) names.emplace_back("mu");
  for (std::size_t j = 1; j <= p; ++j) names.push_back("phi" + std::to_string(j));
  return names;
}

BootstrapSummary bootstrap_two_step(std::span<const double> series,
                                    const taustep::TwoStepEstimate& estimate,
                                    const taustep::TwoStepConfig& config,
                                    const BootstrapConfig& boot) {
  boot.validate();
  config.validate();
  const qreg::LaggedDesign design = qreg::build_design(series, config.p, config.intercept);
  const VectorXd w = qreg::eval_weights(config.weight, design);
  const taustep::MomentWeightFamily fam = taustep::build_moment_family(
      design, w, config.weight, config.family.d0, config.family.p_tilde, config.family.transform);
  const Index m = design.size();
  const Index k = design.dim();
  const double norm = static_cast<double>(m);

  const std::size_t J = boot.replications;
  std::vector<Draw> slots(J);
  std::vector<std::string> errors(J);
  std::vector<char> ok(J, 0);
  parallel_for(J, boot.threads, [&](std::size_t j) {
    std::vector<double> mult;
    if (boot.unit_multipliers) {
      mult.assign(static_cast<std::size_t>(m), 1.0);
    } else {
      rng::Engine eng = replication_stream(boot.seed, j);
      mult = draw_multipliers(static_cast<std::size_t>(m), eng);
    }
    std::vector<Index> keep;
    for (Index i = 0; i < m; ++i) {
      if (mult[static_cast<std::size_t>(i)] > 0.0) keep.push_back(i);
    }
    try {
      auto sub = std::make_shared<const qreg::LaggedDesign>(design.subset(keep));
      const auto km = static_cast<Index>(keep.size());
      VectorXd ws(km);
      MatrixXd vals(km, fam.values.cols());
      for (Index i = 0; i < km; ++i) {
        const double factor = mult[static_cast<std::size_t>(keep[static_cast<std::size_t>(i)])];
        ws[i] = factor * w[keep[static_cast<std::size_t>(i)]];
        vals.row(i) = factor * fam.values.row(keep[static_cast<std::size_t>(i)]);
      }
      taustep::TwoStepConfig cfg = config;
      if (!boot.reuse_grid) cfg.refine_tol = 1.0;  // grid resolution only
      const auto est = taustep::two_step_on(sub, std::move(ws), vals, norm, cfg);
      slots[j] = {j, est.tau_hat, est.theta_hat};
      ok[j] = 1;
    } catch (const NumericError& e) {
      errors[j] = e.what();
    } catch (const InvalidInput& e) {
      errors[j] = e.what();
    }
  });

  BootstrapSummary out;
  out.method = boot.method;
  out.n = design.series_length;
  out.tau_hat = estimate.tau_hat;
  out.theta_hat = estimate.theta_hat;
  if (J < 100) {
    out.warning = "only " + std::to_string(J) + " bootstrap replications; covariance estimates need J >= 100";
  }
  for (std::size_t j = 0; j < J; ++j) {
    if (ok[j]) {
      out.draws.push_back(std::move(slots[j]));
    } else {
      out.skipped.push_back(j);
      out.skip_reasons.push_back(errors[j]);
    }
  }
  if (static_cast<double>(out.skipped.size()) > boot.max_skip_fraction * static_cast<double>(J)) {
    throw AggregateFailure(out.skipped.size(), J,
                           std::to_string(out.skipped.size()) + " of " + std::to_string(J) +
                               " bootstrap replications failed; first error: " +
                               out.skip_reasons.front());
  }

  const double n = static_cast<double>(out.n);
  const double Jd = static_cast<double>(out.draws.size());
  out.Gamma1_hat = MatrixXd::Zero(k, k);
  out.gamma1_sq_hat = 0.0;
  for (const auto& d : out.draws) {
    const VectorXd dev = d.theta_star - estimate.theta_hat;
    out.Gamma1_hat.noalias() += n * dev * dev.transpose();
    out.gamma1_sq_hat += n * (d.tau_star - estimate.tau_hat) * (d.tau_star - estimate.tau_hat);
  }
  out.Gamma1_hat /= Jd;
  out.gamma1_sq_hat /= Jd;

  const auto names = coefficient_names(config.p, config.intercept);
  const boost::math::normal_distribution<double> std_normal;
  auto make_ci = [&](const std::string& name, double est, double var,
                     std::vector<double> centered) {
    ParameterCi ci;
    ci.name = name;
    ci.estimate = est;
    ci.se = std::sqrt(std::max(var, 0.0) / n);
    std::sort(centered.begin(), centered.end());
    for (double level : kLevels) {
      Interval iv;
      iv.level = level;
      if (boot.method == CiMethod::normal) {
        const double z = boost::math::quantile(std_normal, 0.5 + level / 2.0);
        iv.lower = est - z * ci.se;
        iv.upper = est + z * ci.se;
      } else {
        const double alpha = 1.0 - level;
        iv.lower = est - quantile_sorted(centered, 1.0 - alpha / 2.0);
        iv.upper = est - quantile_sorted(centered, alpha / 2.0);
      }
      ci.intervals.push_back(iv);
    }
    return ci;
  };
  for (Index j = 0; j < k; ++j) {
    std::vector<double> centered;
    for (const auto& d : out.draws) centered.push_back(d.theta_star[j] - estimate.theta_hat[j]);
    out.ci.push_back(make_ci(names[static_cast<std::size_t>(j)], estimate.theta_hat[j],
                             out.Gamma1_hat(j, j), std::move(centered)));
  }
  std::vector<double> centered;
  for (const auto& d : out.draws) centered.push_back(d.tau_star - estimate.tau_hat);
  out.ci.push_back(make_ci("tau", estimate.tau_hat, out.gamma1_sq_hat, std::move(centered)));
  return out;
}

void HypothesisSpec::validate(Index k) const {
  if (A.cols() != k) throw InvalidInput("hypothesis matrix has the wrong number of columns");
  if (A.rows() < 1 || a.size() != A.rows()) throw InvalidInput("hypothesis dimensions mismatch");
  Eigen::ColPivHouseholderQR<MatrixXd> qr(A.transpose());
  qr.setThreshold(1e-10);
  if (qr.rank() < A.rows()) throw InvalidInput("hypothesis matrix must have full row rank");
}

double chi2_upper_tail(double x, int df) {
  if (df < 1) throw InvalidInput("chi-square degrees of freedom must be positive");
  if (x <= 0.0) return 1.0;
  return boost::math::gamma_q(0.5 * df, 0.5 * x);
}

TestResult wald_theta(const VectorXd& theta_hat, const MatrixXd& Gamma1_hat,
                      const HypothesisSpec& hyp, std::size_t n) {
  hyp.validate(theta_hat.size());
  const VectorXd diff = hyp.A * theta_hat - hyp.a;
  const MatrixXd V = hyp.A * Gamma1_hat * hyp.A.transpose();
  Eigen::JacobiSVD<MatrixXd> svd(V);
  const auto sv = svd.singularValues();
  if (!(sv[sv.size() - 1] > 0.0) || sv[0] / sv[sv.size() - 1] >= 1e12) {
    throw NumericError("A Gamma A' is singular or ill-conditioned");
  }
  TestResult r;
  r.df = static_cast<int>(hyp.A.rows());
  if (diff.isZero(0.0)) {
    r.statistic = 0.0;
    r.p_value = 1.0;
    return r;
  }
  r.statistic = static_cast<double>(n) * diff.dot(V.ldlt().solve(diff));
  r.p_value = chi2_upper_tail(r.statistic, r.df);
  return r;
}

TestResult wald_tau(double tau_hat, double gamma1_sq_hat, double tau1, std::size_t n) {
  if (!(gamma1_sq_hat > 0.0)) throw NumericError("bootstrap level variance is zero");
  TestResult r;
  r.statistic = static_cast<double>(n) * (tau_hat - tau1) * (tau_hat - tau1) / gamma1_sq_hat;
  r.p_value = chi2_upper_tail(r.statistic, 1);
  return r;
}

nlohmann::json to_json(const BootstrapSummary& s) {
  nlohmann::json ci = nlohmann::json::array();
  for (const auto& c : s.ci) {
    nlohmann::json ivs = nlohmann::json::array();
    for (const auto& iv : c.intervals) {
      ivs.push_back({{"level", iv.level}, {"lower", iv.lower}, {"upper", iv.upper}});
    }
    ci.push_back({{"name", c.name}, {"estimate", c.estimate}, {"se", c.se}, {"intervals", ivs}});
  }
  nlohmann::json G = nlohmann::json::array();
  for (Index i = 0; i < s.Gamma1_hat.rows(); ++i) {
    std::vector<double> row(static_cast<std::size_t>(s.Gamma1_hat.cols()));
    for (Index j = 0; j < s.Gamma1_hat.cols(); ++j) row[static_cast<std::size_t>(j)] = s.Gamma1_hat(i, j);
    G.push_back(row);
  }
  return {{"replications", s.draws.size() + s.skipped.size()},
          {"successful", s.draws.size()},
          {"skipped", s.skipped},
          {"gamma1_sq_hat", s.gamma1_sq_hat},
          {"Gamma1_hat", G},
          {"method", s.method == CiMethod::normal ? "normal" : "percentile"},
          {"n", s.n},
          {"warning", s.warning},
          {"confidence_intervals", ci}};
}

void write_draws_csv(std::ostream& os, const BootstrapSummary& s) {
  os << "j,tau_star";
  const Index k = s.theta_hat.size();
  for (Index j = 0; j < k; ++j) os << ",theta_star_" << j;
  os << '\n';
  for (const auto& d : s.draws) {
    os << d.index << ',' << io::format_double(d.tau_star);
    for (Index j = 0; j < k; ++j) os << ',' << io::format_double(d.theta_star[j]);
    os << '\n';
  }
}

}  // namespace tsqr::boot
