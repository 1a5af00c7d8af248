#include "tsqr/sqe.hpp"

#include <cmath>
#include <ostream>
#include <string>

#include "tsqr/parallel.hpp"
#include "tsqr/series_io.hpp"

namespace tsqr::sqe {

TauGrid TauGrid::make(double epsilon, double step) {
  if (!(epsilon > 0.0 && epsilon < 0.5)) throw InvalidInput("grid epsilon must lie in (0, 0.5)");
  if (!(step > 0.0) || !std::isfinite(step)) throw InvalidInput("grid step must be positive");
  TauGrid g;
  g.epsilon = epsilon;
  g.step = step;
  const double hi = 1.0 - epsilon;
  for (std::size_t i = 0;; ++i) {
    // rounded to 1e-12 so that 0.05 + 20 * 0.01 prints as 0.25
    const double raw = epsilon + static_cast<double>(i) * step;
    const double v = std::round(raw * 1e12) / 1e12;
    if (v > hi + 1e-12) break;
    g.levels.push_back(v);
  }
  if (g.levels.empty()) g.levels.push_back(epsilon);
  if (std::abs(g.levels.back() - hi) <= 1e-9) {
    g.levels.back() = hi;
  } else {
    g.levels.push_back(hi);
  }
  return g;
}

void TauGrid::validate() const {
  if (levels.empty()) throw InvalidInput("empty tau grid");
  for (std::size_t i = 0; i < levels.size(); ++i) {
    if (!(levels[i] > 0.0 && levels[i] < 1.0)) throw InvalidInput("grid level outside (0, 1)");
    if (i > 0 && !(levels[i] > levels[i - 1])) throw InvalidInput("grid levels must increase");
  }
}

int TauGrid::index_of(double tau) const noexcept {
  const std::size_t j = nearest(tau);
  return std::abs(levels[j] - tau) <= 1e-12 ? static_cast<int>(j) : -1;
}

std::size_t TauGrid::nearest(double tau) const noexcept {
  std::size_t best = 0;
  for (std::size_t i = 1; i < levels.size(); ++i) {
    if (std::abs(levels[i] - tau) < std::abs(levels[best] - tau)) best = i;
  }
  return best;
}

namespace {

qreg::QrSolution solve_level(const qreg::LaggedDesign& d, const Eigen::VectorXd& w, double tau,
                             qreg::SolverOptions opts, const std::vector<Eigen::Index>* warm) {
  try {
    return qreg::solve_wqr(d, w, tau, opts, warm);
  } catch (const NumericError& e) {
    throw LevelFailure(tau, "tau = " + std::to_string(tau) + ": " + e.what());
  }
}

}  // namespace

QuantilePath estimate_path(std::shared_ptr<const qreg::LaggedDesign> design,
                           Eigen::VectorXd weights, const qreg::WeightSpec& wspec,
                           const TauGrid& grid, const PathOptions& opts) {
  grid.validate();
  QuantilePath path;
  path.grid = grid;
  path.weights_used = wspec;
  path.design = std::move(design);
  path.weights = std::move(weights);
  const auto& d = *path.design;
  if (opts.solver.check_rank) qreg::check_full_rank(d, path.weights);
  qreg::SolverOptions per_level = opts.solver;
  per_level.check_rank = false;  // same design and weights at every level

  const std::size_t L = grid.levels.size();
  path.estimates.resize(L);
  if (opts.warm_start) {
    for (std::size_t i = 0; i < L; ++i) {
      const auto* warm = i > 0 ? &path.estimates[i - 1].basis : nullptr;
      path.estimates[i] = solve_level(d, path.weights, grid.levels[i], per_level, warm);
    }
  } else {
    parallel_for(L, opts.threads, [&](std::size_t i) {
      path.estimates[i] = solve_level(d, path.weights, grid.levels[i], per_level, nullptr);
    });
  }
  return path;
}

QuantilePath estimate_path(const qreg::LaggedDesign& design, const qreg::WeightSpec& wspec,
                           const TauGrid& grid, const PathOptions& opts) {
  auto shared = std::make_shared<const qreg::LaggedDesign>(design);
  Eigen::VectorXd w = qreg::eval_weights(wspec, *shared);
  return estimate_path(std::move(shared), std::move(w), wspec, grid, opts);
}

qreg::QrSolution solve_at(const QuantilePath& path, double tau, const qreg::SolverOptions& opts) {
  const double lo = path.grid.lower();
  const double hi = path.grid.upper();
  if (!(tau >= lo - 1e-12 && tau <= hi + 1e-12)) {
    throw RangeError("tau = " + std::to_string(tau) + " lies outside [" + std::to_string(lo) +
                     ", " + std::to_string(hi) + "]");
  }
  const int idx = path.grid.index_of(tau);
  if (idx >= 0) return path.estimates[static_cast<std::size_t>(idx)];
  qreg::SolverOptions o = opts;
  o.check_rank = false;
  const auto& warm = path.estimates[path.grid.nearest(tau)].basis;
  return solve_level(*path.design, path.weights, tau, o, &warm);
}

Eigen::VectorXd path_at(const QuantilePath& path, double tau) { return solve_at(path, tau).theta_hat; }

void write_path_csv(std::ostream& os, const QuantilePath& path) {
  os << "tau";
  for (Eigen::Index j = 0; j < path.design->dim(); ++j) os << ",coef_" << j;
  os << ",objective\n";
  for (std::size_t i = 0; i < path.grid.levels.size(); ++i) {
    os << io::format_double(path.grid.levels[i]);
    for (Eigen::Index j = 0; j < path.estimates[i].theta_hat.size(); ++j) {
      os << ',' << io::format_double(path.estimates[i].theta_hat[j]);
    }
    os << ',' << io::format_double(path.estimates[i].objective) << '\n';
  }
}

}  // namespace tsqr::sqe
