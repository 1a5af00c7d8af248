#include "tsqr/taustep.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <ostream>

#include "tsqr/series_io.hpp"

namespace tsqr::taustep {

double apply_transform(Transform t, double y) noexcept {
  switch (t) {
    case Transform::algebraic:
      return y / std::sqrt(1.0 + y * y);
    case Transform::arctangent:
      return 2.0 / std::numbers::pi * std::atan(y);
  }
  return y;
}

std::vector<std::vector<int>> enumerate_members(int d0, int p_tilde) {
  if (d0 < 1) throw InvalidInput("family degree d0 must be at least 1");
  if (p_tilde < 1) throw InvalidInput("family lag count must be at least 1");
  std::vector<std::vector<int>> out;
  std::vector<int> cur(static_cast<std::size_t>(p_tilde), 0);
  for (int degree = 0; degree <= d0; ++degree) {
    // all tuples with sum == degree, lexicographically descending
    std::vector<std::vector<int>> level;
    auto rec = [&](auto&& self, std::size_t pos, int left) -> void {
      if (pos + 1 == cur.size()) {
        cur[pos] = left;
        level.push_back(cur);
        return;
      }
      for (int v = left; v >= 0; --v) {
        cur[pos] = v;
        self(self, pos + 1, left - v);
      }
    };
    rec(rec, 0, degree);
    out.insert(out.end(), level.begin(), level.end());
  }
  return out;
}

MomentWeightFamily build_moment_family(const qreg::LaggedDesign& design,
                                       const Eigen::VectorXd& base_values,
                                       const qreg::WeightSpec& base, int d0, int p_tilde,
                                       Transform transform) {
  const int p = static_cast<int>(design.p);
  if (p_tilde <= 0) p_tilde = p;
  if (p_tilde > p) throw InvalidInput("family lag count exceeds the design lag order");
  if (base_values.size() != design.size()) throw InvalidInput("base weight length mismatch");
  MomentWeightFamily fam;
  fam.base = base;
  fam.transform = transform;
  fam.max_degree = d0;
  fam.lags = p_tilde;
  fam.members = enumerate_members(d0, p_tilde);
  const Eigen::Index m = design.size();
  const auto L = static_cast<Eigen::Index>(fam.members.size());
  Eigen::MatrixXd tl(m, p_tilde);
  for (Eigen::Index i = 0; i < m; ++i) {
    for (int j = 0; j < p_tilde; ++j) tl(i, j) = apply_transform(transform, design.lags(i, j));
  }
  fam.values.resize(m, L);
  for (Eigen::Index l = 0; l < L; ++l) {
    const auto& e = fam.members[static_cast<std::size_t>(l)];
    for (Eigen::Index i = 0; i < m; ++i) {
      double v = base_values[i];
      for (int j = 0; j < p_tilde; ++j) {
        for (int d = 0; d < e[static_cast<std::size_t>(j)]; ++d) v *= tl(i, j);
      }
      fam.values(i, l) = v;
    }
  }
  return fam;
}

MomentWeightFamily build_moment_family(const qreg::LaggedDesign& design,
                                       const qreg::WeightSpec& base, int d0, int p_tilde,
                                       Transform transform) {
  return build_moment_family(design, qreg::eval_weights(base, design), base, d0, p_tilde,
                             transform);
}

Eigen::VectorXd residual_moments(const qreg::LaggedDesign& design, const Eigen::MatrixXd& values,
                                 const Eigen::VectorXd& theta, double tau, double norm) {
  if (norm <= 0.0) norm = static_cast<double>(design.size());
  const Eigen::VectorXd r = design.responses - design.rows * theta;
  Eigen::VectorXd psi_vec(r.size());
  // interpolated rows are zero up to round-off; snap them so psi does not depend on it
  for (Eigen::Index i = 0; i < r.size(); ++i) {
    const double ri = std::abs(r[i]) <= qreg::zero_tol(design.responses[i]) ? 0.0 : r[i];
    psi_vec[i] = qreg::psi(tau, ri);
  }
  return values.transpose() * psi_vec / norm;
}

namespace {

constexpr std::size_t kRowsPerUnknown = 10;

double objective_of(const qreg::LaggedDesign& d, const Eigen::MatrixXd& values,
                    const Eigen::VectorXd& theta, double tau, double norm) {
  return residual_moments(d, values, theta, tau, norm).squaredNorm();
}

}  // namespace

TauEstimate estimate_tau(const sqe::QuantilePath& path, const Eigen::MatrixXd& values,
                         double refine_tol, double norm) {
  const auto& d = *path.design;
  const auto& levels = path.grid.levels;
  if (path.estimates.size() != levels.size()) throw InvalidInput("path does not cover the grid");
  if (values.rows() != d.size()) throw InvalidInput("family rows do not match the design");
  TauEstimate out;
  std::size_t best_idx = 0;
  std::vector<double> q(levels.size());
  for (std::size_t i = 0; i < levels.size(); ++i) {
    q[i] = objective_of(d, values, path.estimates[i].theta_hat, levels[i], norm);
    out.objective_curve.push_back({levels[i], q[i], false});
    if (q[i] < q[best_idx]) best_idx = i;  // strict: ties keep the smaller level
  }
  out.tau_hat = levels[best_idx];
  out.objective = q[best_idx];
  out.solution = path.estimates[best_idx];

  const double lo = levels[best_idx > 0 ? best_idx - 1 : 0];
  const double hi = levels[std::min(best_idx + 1, levels.size() - 1)];
  auto probe = [&](double tau) {
    const qreg::QrSolution sol = sqe::solve_at(path, tau);
    const double val = objective_of(d, values, sol.theta_hat, tau, norm);
    out.objective_curve.push_back({tau, val, true});
    if (val < out.objective || (val == out.objective && tau < out.tau_hat)) {
      out.objective = val;
      out.tau_hat = tau;
      out.solution = sol;
    }
    return val;
  };
  if (hi - lo >= refine_tol) {
    const double gr = (std::sqrt(5.0) - 1.0) / 2.0;
    double a = lo;
    double b = hi;
    double c = b - gr * (b - a);
    double e = a + gr * (b - a);
    double fc = probe(c);
    double fe = probe(e);
    while (b - a >= refine_tol) {
      ++out.refine_iterations;
      if (fc <= fe) {
        b = e;
        e = c;
        fe = fc;
        c = b - gr * (b - a);
        fc = probe(c);
      } else {
        a = c;
        c = e;
        fc = fe;
        e = a + gr * (b - a);
        fe = probe(e);
      }
    }
  }
  const double step = path.grid.step;
  out.boundary_flag = out.tau_hat - levels.front() <= step + 1e-12 ||
                      levels.back() - out.tau_hat <= step + 1e-12;
  if (out.boundary_flag) {
    out.warning = "tau_hat lies within one grid step of the grid boundary; the true level may lie "
                  "outside the estimation interval";
  }
  return out;
}

TauEstimate estimate_tau(const sqe::QuantilePath& path, const MomentWeightFamily& family,
                         double refine_tol) {
  return estimate_tau(path, family.values, refine_tol, 0.0);
}

void TwoStepConfig::validate() const {
  if (p < 1) throw InvalidInput("lag order p must be at least 1");
  weight.validate();
  grid.validate();
  if (family.d0 < 1) throw InvalidInput("family degree d0 must be at least 1");
  if (family.p_tilde < 0 || static_cast<std::size_t>(family.p_tilde) > p) {
    throw InvalidInput("family lag count must lie in [1, p]");
  }
  if (!(refine_tol > 0.0)) throw InvalidInput("refine tolerance must be positive");
}

TwoStepEstimate two_step_on(std::shared_ptr<const qreg::LaggedDesign> design,
                            Eigen::VectorXd weights, const Eigen::MatrixXd& values, double norm,
                            const TwoStepConfig& config) {
  const auto& d = *design;
  sqe::QuantilePath path;
  try {
    path = sqe::estimate_path(design, std::move(weights), config.weight, config.grid, config.path);
  } catch (const NumericError& e) {
    throw StageFailure("quantile path", e.what());
  }
  TauEstimate te;
  try {
    te = estimate_tau(path, values, config.refine_tol, norm);
  } catch (const NumericError& e) {
    throw StageFailure("level estimation", e.what());
  }
  TwoStepEstimate out;
  try {
    qreg::SolverOptions o = config.path.solver;
    o.check_rank = false;
    out.final_solution = qreg::solve_wqr(d, path.weights, te.tau_hat, o);
  } catch (const NumericError& e) {
    throw StageFailure("final solve", e.what());
  }
  out.tau_hat = te.tau_hat;
  out.theta_hat = out.final_solution.theta_hat;
  out.objective = te.objective;
  out.objective_curve = std::move(te.objective_curve);
  out.refine_iterations = te.refine_iterations;
  out.boundary_flag = te.boundary_flag;
  out.warning = te.warning;
  out.n = d.series_length;
  out.rows = static_cast<std::size_t>(d.size());
  out.family_size = static_cast<std::size_t>(values.cols());
  return out;
}

TwoStepEstimate two_step(std::span<const double> series, const TwoStepConfig& config) {
  config.validate();
  auto design = std::make_shared<const qreg::LaggedDesign>(
      qreg::build_design(series, config.p, config.intercept));
  Eigen::VectorXd w = qreg::eval_weights(config.weight, *design);
  const MomentWeightFamily fam = build_moment_family(
      *design, w, config.weight, config.family.d0, config.family.p_tilde, config.family.transform);
  // ten rows per estimated coefficient and per moment member
  const auto need = static_cast<Eigen::Index>(kRowsPerUnknown * (static_cast<std::size_t>(design->dim()) + fam.size()));
  if (design->size() < need) {
    throw InvalidInput("series too short for the two-step estimator: " +
                       std::to_string(design->size()) + " usable rows, need " + std::to_string(need));
  }
  return two_step_on(design, std::move(w), fam.values, 0.0, config);
}

TwoStepEstimate two_step(const dgp::SeriesSample& series, const TwoStepConfig& config) {
  return two_step(std::span<const double>(series.values), config);
}

nlohmann::json to_json(const TwoStepEstimate& est) {
  nlohmann::json curve = nlohmann::json::array();
  for (const auto& pt : est.objective_curve) {
    curve.push_back({{"tau", pt.tau}, {"objective", pt.objective}, {"refinement", pt.refinement}});
  }
  std::vector<double> theta(est.theta_hat.data(), est.theta_hat.data() + est.theta_hat.size());
  nlohmann::json j{{"tau_hat", est.tau_hat},
                   {"theta_hat", theta},
                   {"objective", est.objective},
                   {"objective_curve", curve},
                   {"refine_iterations", est.refine_iterations},
                   {"boundary_flag", est.boundary_flag},
                   {"n", est.n},
                   {"family_size", est.family_size},
                   {"certificate_margin", est.final_solution.subgradient_norm_certificate}};
  if (!est.warning.empty()) j["warning"] = est.warning;
  return j;
}

void write_objective_csv(std::ostream& os, const std::vector<CurvePoint>& curve) {
  std::vector<CurvePoint> sorted = curve;
  std::stable_sort(sorted.begin(), sorted.end(),
                   [](const CurvePoint& a, const CurvePoint& b) { return a.tau < b.tau; });
  os << "tau,objective,refinement\n";
  for (const auto& pt : sorted) {
    os << io::format_double(pt.tau) << ',' << io::format_double(pt.objective) << ','
       << (pt.refinement ? 1 : 0) << '\n';
  }
}

void to_json(nlohmann::json& j, const TwoStepConfig& c) {
  j = nlohmann::json{{"p", c.p},
                     {"intercept", c.intercept},
                     {"weight", c.weight},
                     {"tau_grid", {{"epsilon", c.grid.epsilon}, {"step", c.grid.step}}},
                     {"family",
                      {{"d0", c.family.d0},
                       {"p_tilde", c.family.p_tilde},
                       {"transform",
                        c.family.transform == Transform::algebraic ? "algebraic" : "arctangent"}}},
                     {"refine_tol", c.refine_tol},
                     {"warm_start", c.path.warm_start}};
}

void from_json(const nlohmann::json& j, TwoStepConfig& c) {
  c.p = j.value("p", c.p);
  c.intercept = j.value("intercept", c.intercept);
  if (j.contains("weight")) c.weight = j.at("weight").get<qreg::WeightSpec>();
  if (j.contains("tau_grid")) {
    const auto& g = j.at("tau_grid");
    c.grid = sqe::TauGrid::make(g.value("epsilon", 0.05), g.value("step", 0.01));
  }
  if (j.contains("family")) {
    const auto& f = j.at("family");
    c.family.d0 = f.value("d0", c.family.d0);
    c.family.p_tilde = f.value("p_tilde", c.family.p_tilde);
    const std::string tr = f.value("transform", std::string("algebraic"));
    if (tr == "algebraic") {
      c.family.transform = Transform::algebraic;
    } else if (tr == "arctangent") {
      c.family.transform = Transform::arctangent;
    } else {
      throw InvalidInput("unknown transform '" + tr + "'");
    }
  }
  c.refine_tol = j.value("refine_tol", c.refine_tol);
  c.path.warm_start = j.value("warm_start", c.path.warm_start);
}

}  // namespace tsqr::taustep
