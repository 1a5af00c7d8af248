#include "tsqr/bias_oracle.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <string>

#include "tsqr/errors.hpp"
#include "tsqr/parallel.hpp"
#include "tsqr/rng.hpp"
#include "tsqr/series_io.hpp"

namespace tsqr::oracle {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

constexpr std::uint64_t kChainTag = 0x0c1a5e;

VectorXd column_se(const MatrixXd& H) {
  const double N = static_cast<double>(H.rows());
  const Eigen::RowVectorXd mean = H.colwise().mean();
  const MatrixXd centered = H.rowwise() - mean;
  return (centered.colwise().squaredNorm() / (N - 1.0) / N).cwiseSqrt().transpose();
}

}  // namespace

ParametricNoiseModel ParametricNoiseModel::from_dgp(const dgp::DgpSpec& spec,
                                                    qreg::WeightSpec weight) {
  return {spec.innovation, spec.volatility, spec.theta, weight};
}

void ParametricNoiseModel::validate() const {
  innovation.validate();
  volatility.validate();
  theta_true.validate();
  weight.validate();
  if (!dgp::check_stationarity(theta_true)) throw InvalidInput("oracle model is not stationary");
}

std::vector<double> OracleConfig::equispaced(std::size_t points) {
  if (points < 2) throw InvalidInput("s-grid needs at least two points");
  std::vector<double> g(points);
  for (std::size_t i = 0; i < points; ++i) {
    g[i] = static_cast<double>(i) / static_cast<double>(points - 1);
  }
  return g;
}

void OracleConfig::validate() const {
  if (mc_paths < 10000) throw InvalidInput("mc_paths must be at least 10000");
  if (s_grid.size() < 2) throw InvalidInput("s-grid needs at least two points");
  if (!std::is_sorted(s_grid.begin(), s_grid.end()) ||
      std::adjacent_find(s_grid.begin(), s_grid.end()) != s_grid.end()) {
    throw InvalidInput("s-grid must be strictly increasing");
  }
  if (s_grid.front() != 0.0 || s_grid.back() != 1.0) throw InvalidInput("s-grid must cover 0 and 1");
  if (thin < 1 || chunk < 1) throw InvalidInput("thin and chunk must be positive");
  if (!(newton_tol > 0.0) || newton_max_iter < 1) throw InvalidInput("bad Newton settings");
}

BiasOracle::BiasOracle(ParametricNoiseModel model, OracleConfig config)
    : model_(std::move(model)), config_(std::move(config)) {
  model_.validate();
  config_.validate();
  k_ = static_cast<Index>(model_.theta_true.dim());
  p_ = model_.theta_true.order();
  tau0_ = model_.tau0();

  const auto& s = config_.s_grid;
  const std::size_t S = s.size();
  c_.assign(S, 0.0);
  for (std::size_t j = 0; j + 1 < S; ++j) {
    const double h = s[j + 1] - s[j];
    c_[j] += 0.5 * h;
    c_[j + 1] += 0.5 * h;
  }

  const std::size_t N = config_.mc_paths;
  const std::size_t chunks = (N + config_.chunk - 1) / config_.chunk;
  draws_.resize(S);
  for (auto& d : draws_) {
    d.Z.resize(static_cast<Index>(N), k_);
    d.w.resize(static_cast<Index>(N));
    d.sigma.resize(static_cast<Index>(N));
  }
  const bool icpt = model_.theta_true.has_intercept();
  const double mu = icpt ? *model_.theta_true.intercept : 0.0;
  const auto& phi = model_.theta_true.ar_coeffs;
  const auto& vol = model_.volatility;

  parallel_for(S * chunks, config_.threads, [&](std::size_t job) {
    const std::size_t si = job / chunks;
    const std::size_t c = job % chunks;
    const double sv = s[si];
    const std::size_t first = c * config_.chunk;
    const std::size_t count = std::min(config_.chunk, N - first);
    // same stream for every s: common random numbers across the s-grid
    rng::Engine eng = rng::make_stream(config_.seed, {kChainTag, c});
    dgp::InnovationSampler sampler(model_.innovation);
    std::vector<double> hist(p_, 0.0);  // hist[j] = y_{t-1-j}
    const double omega = vol.omega(sv);
    double sig2 = vol.garch < 1.0 ? omega / (1.0 - vol.garch) : omega;
    const std::size_t steps = config_.burn_in + count * config_.thin;
    auto& out = draws_[si];
    std::size_t rec = 0;
    for (std::size_t step = 0; step < steps; ++step) {
      const double sigma = std::sqrt(sig2);
      if (step >= config_.burn_in && (step - config_.burn_in) % config_.thin == 0 && rec < count) {
        const auto row = static_cast<Index>(first + rec);
        Index col = 0;
        if (icpt) out.Z(row, col++) = 1.0;
        for (std::size_t j = 0; j < p_; ++j) out.Z(row, col++) = hist[j];
        out.w[row] = model_.weight.evaluate(hist);
        out.sigma[row] = sigma;
        ++rec;
      }
      const double eta = sampler(eng);
      double y = mu + sigma * eta;
      for (std::size_t j = 0; j < p_; ++j) y += phi[j] * hist[j];
      if (!(std::abs(y) <= 1e300) || !std::isfinite(sig2)) {
        throw OracleFailure("stationary draw overflowed at s = " + std::to_string(sv));
      }
      for (std::size_t j = p_; j-- > 1;) hist[j] = hist[j - 1];
      if (p_ > 0) hist[0] = y;
      sig2 = omega + (vol.arch * eta * eta + vol.garch) * sig2;
    }
  });
}

template <class F>
MatrixXd BiasOracle::per_path(Index m, F&& integrand) const {
  const std::size_t N = config_.mc_paths;
  const std::size_t chunks = (N + config_.chunk - 1) / config_.chunk;
  MatrixXd H = MatrixXd::Zero(static_cast<Index>(N), m);
  parallel_for(chunks, config_.threads, [&](std::size_t c) {
    const std::size_t first = c * config_.chunk;
    const std::size_t last = std::min(N, first + config_.chunk);
    VectorXd v(m);
    for (std::size_t si = 0; si < draws_.size(); ++si) {
      for (std::size_t i = first; i < last; ++i) {
        integrand(si, static_cast<Index>(i), v);
        H.row(static_cast<Index>(i)) += c_[si] * v.transpose();
      }
    }
  });
  return H;
}

template <class F>
MatrixXd BiasOracle::reduce(Index rows, Index cols, F&& integrand) const {
  const std::size_t N = config_.mc_paths;
  const std::size_t chunks = (N + config_.chunk - 1) / config_.chunk;
  std::vector<MatrixXd> partial(chunks);
  parallel_for(chunks, config_.threads, [&](std::size_t c) {
    const std::size_t first = c * config_.chunk;
    const std::size_t last = std::min(N, first + config_.chunk);
    MatrixXd acc = MatrixXd::Zero(rows, cols);
    MatrixXd tmp = MatrixXd::Zero(rows, cols);
    for (std::size_t si = 0; si < draws_.size(); ++si) {
      tmp.setZero();
      for (std::size_t i = first; i < last; ++i) integrand(si, static_cast<Index>(i), tmp);
      acc += c_[si] * tmp;
    }
    partial[c] = std::move(acc);
  });
  MatrixXd total = MatrixXd::Zero(rows, cols);
  for (const auto& p : partial) total += p;
  return total / static_cast<double>(N);
}

VectorXd BiasOracle::g_value(const VectorXd& x, double tau) const {
  const auto& innov = model_.innovation;
  return reduce(k_, 1, [&](std::size_t s, Index i, MatrixXd& acc) {
    const auto& d = draws_[s];
    const auto z = d.Z.row(i);
    const double F = dgp::innovation_cdf(innov, z.dot(x) / d.sigma[i]);
    acc.col(0) -= (d.w[i] * (tau - F)) * z.transpose();
  });
}

VectorEstimate BiasOracle::g(const VectorXd& x, double tau) const {
  if (x.size() != k_) throw InvalidInput("oracle argument has the wrong length");
  const auto& innov = model_.innovation;
  const MatrixXd H = per_path(k_, [&](std::size_t s, Index i, VectorXd& v) {
    const auto& d = draws_[s];
    const auto z = d.Z.row(i);
    const double F = dgp::innovation_cdf(innov, z.dot(x) / d.sigma[i]);
    v = -(d.w[i] * (tau - F)) * z.transpose();
  });
  return {H.colwise().mean().transpose(), column_se(H)};
}

MatrixXd BiasOracle::jacobian_raw(const VectorXd& x) const {
  const auto& innov = model_.innovation;
  MatrixXd J = reduce(k_, k_, [&](std::size_t s, Index i, MatrixXd& acc) {
    const auto& d = draws_[s];
    const auto z = d.Z.row(i);
    const double f = dgp::innovation_pdf(innov, z.dot(x) / d.sigma[i]) / d.sigma[i];
    acc.noalias() += (d.w[i] * f) * z.transpose() * z;
  });
  return 0.5 * (J + J.transpose());
}

namespace {

// Values below kZeroRel * E|w~_l| are round-off, whatever their MC SE.
constexpr double kZeroRel = 1e-8;

bool positive_definite(const MatrixXd& J) {
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(J);
  return es.eigenvalues().minCoeff() > 1e-12 * std::max(1.0, es.eigenvalues().maxCoeff());
}

}  // namespace

VectorXd BiasOracle::member_scale(const std::vector<std::vector<int>>& members,
                                  taustep::Transform transform) const {
  const auto L = static_cast<Index>(members.size());
  return per_path(L, [&](std::size_t s, Index i, VectorXd& v) {
           for (Index l = 0; l < L; ++l) {
             v[l] = std::abs(member_value(s, i, members[static_cast<std::size_t>(l)], transform));
           }
         })
      .colwise()
      .mean()
      .transpose();
}

MatrixXd BiasOracle::jacobian(const VectorXd& x, double /*tau*/) const {
  if (x.size() != k_) throw InvalidInput("oracle argument has the wrong length");
  MatrixXd J = jacobian_raw(x);
  if (!positive_definite(J)) throw OracleFailure("oracle Jacobian is not positive definite");
  return J;
}

BiasSolution BiasOracle::solve_bias(double tau) const {
  if (!(tau > 0.0 && tau < 1.0)) throw InvalidInput("tau must lie in (0, 1)");
  BiasSolution out;
  VectorXd x = VectorXd::Zero(k_);
  VectorXd gx = g_value(x, tau);
  MatrixXd J;
  bool converged = false;
  for (int it = 0; it <= config_.newton_max_iter; ++it) {
    const double gmax = gx.cwiseAbs().maxCoeff();
    out.trace.push_back(gmax);
    if (gmax < config_.newton_tol * (1.0 + x.cwiseAbs().maxCoeff())) {
      converged = true;
      out.iterations = it;
      break;
    }
    if (it == config_.newton_max_iter) break;
    if (J.size() == 0) J = jacobian(x, tau);
    const VectorXd step = J.ldlt().solve(gx);
    // Backtrack until |g| decreases at a point where the density still supports a PD Jacobian.
    double t = 1.0;
    VectorXd cand;
    VectorXd gc;
    MatrixXd Jc;
    for (;;) {
      cand = x - t * step;
      gc = g_value(cand, tau);
      Jc = jacobian_raw(cand);
      if ((gc.norm() < gx.norm() && positive_definite(Jc)) || t <= 1e-4) break;
      t *= 0.5;
    }
    if (!positive_definite(Jc)) throw OracleFailure("oracle Jacobian is not positive definite");
    x = cand;
    gx = gc;
    J = Jc;
  }
  if (!converged) {
    throw NoConvergence(x, out.trace,
                        "bias Newton iteration did not converge at tau = " + std::to_string(tau));
  }
  out.delta0 = x;
  // delta-method SE: delta0 - truth ~ -J^{-1} (g_hat - g)
  const auto& innov = model_.innovation;
  const MatrixXd H = per_path(k_, [&](std::size_t s, Index i, VectorXd& v) {
    const auto& d = draws_[s];
    const auto z = d.Z.row(i);
    const double F = dgp::innovation_cdf(innov, z.dot(x) / d.sigma[i]);
    v = -(d.w[i] * (tau - F)) * z.transpose();
  });
  const MatrixXd Jinv = jacobian(x, tau).inverse();
  out.se = column_se(H * Jinv.transpose());
  return out;
}

VectorEstimate BiasOracle::bias_derivative_at_tau0() const {
  const VectorXd zero = VectorXd::Zero(k_);
  const MatrixXd J0 = jacobian(zero, tau0_);
  Eigen::FullPivLU<MatrixXd> lu(J0);
  if (!lu.isInvertible()) throw OracleFailure("leading matrix of the bias derivative is singular");
  const VectorXd m = reduce(k_, 1, [&](std::size_t s, Index i, MatrixXd& acc) {
    const auto& d = draws_[s];
    acc.col(0) += d.w[i] * d.Z.row(i).transpose();
  });
  const VectorXd dprime = lu.solve(m);
  const auto& innov = model_.innovation;
  const double f0 = dgp::innovation_pdf(innov, 0.0);
  const MatrixXd H = per_path(k_, [&](std::size_t s, Index i, VectorXd& v) {
    const auto& d = draws_[s];
    const auto z = d.Z.row(i);
    v = d.w[i] * (1.0 - f0 / d.sigma[i] * z.dot(dprime)) * z.transpose();
  });
  const MatrixXd Jinv = lu.inverse();
  return {dprime, column_se(H * Jinv.transpose())};
}

MatrixXd BiasOracle::sigma_matrix(double tau) const { return jacobian(solve_bias(tau).delta0, tau); }

BiasCurve BiasOracle::bias_curve(const sqe::TauGrid& levels) const {
  BiasCurve out;
  out.levels = levels;
  const auto& innov = model_.innovation;
  std::vector<MatrixXd> influence;
  for (double tau : levels.levels) {
    const BiasSolution sol = solve_bias(tau);
    out.delta0.push_back(sol.delta0);
    out.se.push_back(sol.se);
    const VectorXd x = sol.delta0;
    MatrixXd H = per_path(k_, [&](std::size_t s, Index i, VectorXd& v) {
      const auto& d = draws_[s];
      const auto z = d.Z.row(i);
      const double F = dgp::innovation_cdf(innov, z.dot(x) / d.sigma[i]);
      v = -(d.w[i] * (tau - F)) * z.transpose();
    });
    const MatrixXd Jinv = jacobian(x, tau).inverse();
    influence.push_back(H * Jinv.transpose());
  }
  const std::size_t L = levels.levels.size();
  out.pair_se.assign(L, std::vector<VectorXd>(L, VectorXd::Zero(k_)));
  for (std::size_t a = 0; a < L; ++a) {
    for (std::size_t b = a + 1; b < L; ++b) {
      out.pair_se[a][b] = column_se(influence[a] - influence[b]);
      out.pair_se[b][a] = out.pair_se[a][b];
    }
  }
  const VectorEstimate dd = bias_derivative_at_tau0();
  out.derivative_at_tau0 = dd.value;
  out.derivative_se = dd.se;
  return out;
}

double BiasOracle::member_value(std::size_t s, Index i, const std::vector<int>& e,
                                taustep::Transform transform) const {
  const auto& d = draws_[s];
  const Index offset = model_.theta_true.has_intercept() ? 1 : 0;
  double v = d.w[i];
  for (std::size_t j = 0; j < e.size(); ++j) {
    if (e[j] == 0) continue;
    const double t = taustep::apply_transform(transform, d.Z(i, offset + static_cast<Index>(j)));
    for (int q = 0; q < e[j]; ++q) v *= t;
  }
  return v;
}

VectorEstimate BiasOracle::gtilde(const std::vector<std::vector<int>>& members,
                                  taustep::Transform transform, double tau) const {
  const VectorXd x = solve_bias(tau).delta0;
  const auto& innov = model_.innovation;
  const auto L = static_cast<Index>(members.size());
  const MatrixXd H = per_path(L, [&](std::size_t s, Index i, VectorXd& v) {
    const auto& d = draws_[s];
    const double F = dgp::innovation_cdf(innov, d.Z.row(i).dot(x) / d.sigma[i]);
    for (Index l = 0; l < L; ++l) {
      v[l] = member_value(s, i, members[static_cast<std::size_t>(l)], transform) * (tau - F);
    }
  });
  return {H.colwise().mean().transpose(), column_se(H)};
}

std::vector<std::vector<int>> BiasOracle::members_for(const taustep::MomentFamilySpec& f) const {
  const int pt = f.p_tilde > 0 ? f.p_tilde : static_cast<int>(p_);
  if (pt > static_cast<int>(p_)) throw InvalidInput("family lag count exceeds the model order");
  return taustep::enumerate_members(f.d0, pt);
}

double BiasOracle::population_objective(const taustep::MomentFamilySpec& family, double tau) const {
  return gtilde(members_for(family), family.transform, tau).value.squaredNorm();
}

BiasOracle::DerivativeBlock BiasOracle::gtilde_derivative(
    const std::vector<std::vector<int>>& members, taustep::Transform transform) const {
  constexpr double h = 0.01;
  const auto L = static_cast<Index>(members.size());
  const auto& innov = model_.innovation;
  DerivativeBlock out;
  const VectorXd xp = solve_bias(tau0_ + h).delta0;
  const VectorXd xm = solve_bias(tau0_ - h).delta0;
  const MatrixXd D = per_path(L, [&](std::size_t s, Index i, VectorXd& v) {
    const auto& d = draws_[s];
    const auto z = d.Z.row(i);
    const double Fp = dgp::innovation_cdf(innov, z.dot(xp) / d.sigma[i]);
    const double Fm = dgp::innovation_cdf(innov, z.dot(xm) / d.sigma[i]);
    const double diff = ((tau0_ + h - Fp) - (tau0_ - h - Fm)) / (2.0 * h);
    for (Index l = 0; l < L; ++l) {
      v[l] = member_value(s, i, members[static_cast<std::size_t>(l)], transform) * diff;
    }
  });
  out.value = D.colwise().mean().transpose();
  out.se = column_se(D);
  out.gtilde0 = gtilde(members, transform, tau0_).value;

  const VectorXd zero = VectorXd::Zero(k_);
  out.Sigma = jacobian(zero, tau0_);
  out.delta0_prime = bias_derivative_at_tau0().value;
  const double f0 = dgp::innovation_pdf(innov, 0.0);
  out.b = reduce(k_, L, [&](std::size_t s, Index i, MatrixXd& acc) {
    const auto& d = draws_[s];
    const double dens = f0 / d.sigma[i];
    for (Index l = 0; l < L; ++l) {
      acc.col(l) += member_value(s, i, members[static_cast<std::size_t>(l)], transform) * dens *
                    d.Z.row(i).transpose();
    }
  });
  const MatrixXd mean_w = reduce(L, 1, [&](std::size_t s, Index i, MatrixXd& acc) {
    for (Index l = 0; l < L; ++l) {
      acc(l, 0) += member_value(s, i, members[static_cast<std::size_t>(l)], transform);
    }
  });
  out.analytic = mean_w.col(0) - out.b.transpose() * out.delta0_prime;
  return out;
}

AsymptoticVariances BiasOracle::asymptotic_variances(const std::vector<std::vector<int>>& members,
                                                     taustep::Transform transform) const {
  const auto L = static_cast<Index>(members.size());
  const DerivativeBlock blk = gtilde_derivative(members, transform);
  AsymptoticVariances av;
  av.tau0 = tau0_;
  av.Sigma = blk.Sigma;
  av.delta0_prime = blk.delta0_prime;
  av.b = blk.b;
  av.gtilde_at_tau0 = blk.gtilde0;
  av.gtilde_deriv = blk.value;
  av.gtilde_deriv_se = blk.se;
  av.gtilde_deriv_analytic = blk.analytic;
  const VectorXd floor = kZeroRel * member_scale(members, transform);
  double denom = 0.0;
  for (Index l = 0; l < L; ++l) {
    if (std::abs(blk.value[l]) > std::max(3.0 * blk.se[l], floor[l])) {
      av.active.push_back(static_cast<int>(l));
      denom += blk.value[l] * blk.value[l];
    }
  }
  if (av.active.empty()) {
    throw IdentificationFailure("no moment-family member has a detectable level derivative");
  }
  av.a = VectorXd::Zero(L);
  for (int l : av.active) av.a[l] = -blk.value[l] / denom;

  const MatrixXd Sinv = av.Sigma.inverse();
  // coefficient of w Z in h~: -sum_l a_l Sigma^{-1} b_l
  const VectorXd c_wz = -(Sinv * (av.b * av.a));
  const MatrixXd moments = reduce(k_ + 1, k_ + 1, [&](std::size_t s, Index i, MatrixXd& acc) {
    const auto& d = draws_[s];
    const VectorXd wz = d.w[i] * d.Z.row(i).transpose();
    double ht = c_wz.dot(wz);
    for (int l : av.active) ht += av.a[l] * member_value(s, i, members[static_cast<std::size_t>(l)], transform);
    VectorXd v(k_ + 1);
    v.head(k_) = Sinv * wz + av.delta0_prime * ht;
    v[k_] = ht;
    acc.noalias() += v * v.transpose();
  });
  const double scale = tau0_ * (1.0 - tau0_);
  av.gamma1_sq = scale * moments(k_, k_);
  av.Gamma1 = scale * moments.topLeftCorner(k_, k_);
  av.Gamma1 = 0.5 * (av.Gamma1 + av.Gamma1.transpose()).eval();
  return av;
}

AsymptoticVariances BiasOracle::asymptotic_variances(const taustep::MomentFamilySpec& family) const {
  return asymptotic_variances(members_for(family), family.transform);
}

bool IdentificationReport::any_flag() const {
  return derivative_flag || std::any_of(flagged.begin(), flagged.end(), [](bool b) { return b; });
}

IdentificationReport BiasOracle::verify_identification(
    const std::vector<std::vector<int>>& members, taustep::Transform transform,
    const sqe::TauGrid& grid) const {
  IdentificationReport rep;
  const auto L = static_cast<Index>(members.size());
  const auto& innov = model_.innovation;
  const VectorXd scale = kZeroRel * member_scale(members, transform);
  const double q_floor = scale.squaredNorm();
  for (double tau : grid.levels) {
    const VectorXd x = solve_bias(tau).delta0;
    const MatrixXd H = per_path(L, [&](std::size_t s, Index i, VectorXd& v) {
      const auto& d = draws_[s];
      const double F = dgp::innovation_cdf(innov, d.Z.row(i).dot(x) / d.sigma[i]);
      for (Index l = 0; l < L; ++l) {
        v[l] = member_value(s, i, members[static_cast<std::size_t>(l)], transform) * (tau - F);
      }
    });
    const VectorXd gt = H.colwise().mean().transpose();
    const double q = gt.squaredNorm();
    // delta method for sum_l g~_l^2
    const VectorXd infl = 2.0 * (H * gt);
    const double mean = infl.mean();
    const double N = static_cast<double>(infl.size());
    const double se = std::sqrt((infl.array() - mean).square().sum() / (N - 1.0) / N);
    rep.taus.push_back(tau);
    rep.sum_sq.push_back(q);
    rep.sum_sq_se.push_back(se);
    rep.flagged.push_back(std::abs(tau - tau0_) >= 0.05 - 1e-12 && q <= std::max(3.0 * se, q_floor));
  }
  const DerivativeBlock blk = gtilde_derivative(members, transform);
  rep.derivative = blk.value;
  rep.derivative_se = blk.se;
  rep.derivative_flag = true;
  for (Index l = 0; l < L; ++l) {
    if (std::abs(blk.value[l]) > std::max(3.0 * blk.se[l], scale[l])) {
      rep.derivative_flag = false;
    }
  }
  return rep;
}

IdentificationReport BiasOracle::verify_identification(const taustep::MomentFamilySpec& family,
                                                       const sqe::TauGrid& grid) const {
  return verify_identification(members_for(family), family.transform, grid);
}

VectorEstimate g_function(const VectorXd& x, double tau, const ParametricNoiseModel& model,
                          const OracleConfig& config) {
  return BiasOracle(model, config).g(x, tau);
}

MatrixXd g_jacobian(const VectorXd& x, double tau, const ParametricNoiseModel& model,
                    const OracleConfig& config) {
  return BiasOracle(model, config).jacobian(x, tau);
}

BiasSolution solve_bias(double tau, const ParametricNoiseModel& model, const OracleConfig& config) {
  return BiasOracle(model, config).solve_bias(tau);
}

VectorEstimate bias_derivative_at_tau0(const ParametricNoiseModel& model,
                                       const OracleConfig& config) {
  return BiasOracle(model, config).bias_derivative_at_tau0();
}

MatrixXd sigma_matrix(double tau, const ParametricNoiseModel& model, const OracleConfig& config) {
  return BiasOracle(model, config).sigma_matrix(tau);
}

AsymptoticVariances asymptotic_variances(const ParametricNoiseModel& model,
                                         const taustep::MomentFamilySpec& family,
                                         const OracleConfig& config) {
  return BiasOracle(model, config).asymptotic_variances(family);
}

IdentificationReport verify_identification(const ParametricNoiseModel& model,
                                           const taustep::MomentFamilySpec& family,
                                           const sqe::TauGrid& grid, const OracleConfig& config) {
  return BiasOracle(model, config).verify_identification(family, grid);
}

namespace {

std::vector<double> as_vec(const VectorXd& v) { return {v.data(), v.data() + v.size()}; }

nlohmann::json as_rows(const MatrixXd& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Index i = 0; i < m.rows(); ++i) rows.push_back(as_vec(m.row(i).transpose()));
  return rows;
}

}  // namespace

void write_bias_curve_csv(std::ostream& os, const BiasCurve& curve) {
  const Index k = curve.delta0.empty() ? 0 : curve.delta0.front().size();
  os << "tau";
  for (Index j = 0; j < k; ++j) os << ",delta0_" << j;
  for (Index j = 0; j < k; ++j) os << ",se_" << j;
  os << '\n';
  for (std::size_t i = 0; i < curve.delta0.size(); ++i) {
    os << io::format_double(curve.levels.levels[i]);
    for (Index j = 0; j < k; ++j) os << ',' << io::format_double(curve.delta0[i][j]);
    for (Index j = 0; j < k; ++j) os << ',' << io::format_double(curve.se[i][j]);
    os << '\n';
  }
}

nlohmann::json to_json(const BiasCurve& curve) {
  nlohmann::json pts = nlohmann::json::array();
  for (std::size_t i = 0; i < curve.delta0.size(); ++i) {
    pts.push_back({{"tau", curve.levels.levels[i]},
                   {"delta0", as_vec(curve.delta0[i])},
                   {"se", as_vec(curve.se[i])}});
  }
  return {{"curve", pts},
          {"derivative_at_tau0", as_vec(curve.derivative_at_tau0)},
          {"derivative_se", as_vec(curve.derivative_se)}};
}

nlohmann::json to_json(const AsymptoticVariances& av) {
  return {{"tau0", av.tau0},
          {"gamma1_sq", av.gamma1_sq},
          {"Gamma1", as_rows(av.Gamma1)},
          {"Sigma", as_rows(av.Sigma)},
          {"delta0_prime", as_vec(av.delta0_prime)},
          {"gtilde_at_tau0", as_vec(av.gtilde_at_tau0)},
          {"gtilde_deriv", as_vec(av.gtilde_deriv)},
          {"gtilde_deriv_se", as_vec(av.gtilde_deriv_se)},
          {"gtilde_deriv_analytic", as_vec(av.gtilde_deriv_analytic)},
          {"active", av.active},
          {"a", as_vec(av.a)}};
}

nlohmann::json to_json(const IdentificationReport& rep) {
  nlohmann::json pts = nlohmann::json::array();
  for (std::size_t i = 0; i < rep.taus.size(); ++i) {
    pts.push_back({{"tau", rep.taus[i]},
                   {"sum_sq", rep.sum_sq[i]},
                   {"se", rep.sum_sq_se[i]},
                   {"flagged", static_cast<bool>(rep.flagged[i])}});
  }
  return {{"objective", pts},
          {"derivative", as_vec(rep.derivative)},
          {"derivative_se", as_vec(rep.derivative_se)},
          {"derivative_flag", rep.derivative_flag}};
}

}  // namespace tsqr::oracle
