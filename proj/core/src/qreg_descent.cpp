// Exact descent over basic solutions of sum_i w_i rho_tau(y_i - z_i' theta).
//
// The loss is convex and piecewise linear with kinks on the hyperplanes
// z_i' theta = y_i. Every step is an exact line search that never
// increases the loss; steps are taken along
//  - null-space directions of the current interpolated rows (purification,
//    until k independent rows are interpolated),
//  - simplex edges of a vertex with a negative directional derivative,
//  - the steepest-descent direction at a degenerate vertex, obtained from a
//    small box-constrained least-squares problem on the subdifferential.
// Termination happens only at a point where 0 lies in the subdifferential.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "tsqr/errors.hpp"
#include "tsqr/qreg.hpp"

namespace tsqr::qreg::detail {

namespace {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

struct Problem {
  const MatrixXd& Z;
  const VectorXd& y;
  const VectorXd& w;
  double tau;
  VectorXd tol;       // per-row zero tolerance
  double row_scale;   // sum_i w_i ||z_i||_1
};

struct StepResult {
  double t = 0.0;
  Index landing = -1;  // row whose kink ends the step
  double slope0 = 0.0;
};

// Exact minimizer over t >= 0 of sum_i w_i rho(r_i - t a_i). Rows flagged in
// `zero` are treated as sitting exactly on their kink. When `force_first`,
// the step goes at least to the first kink (used when the initial slope is
// zero, so moving cannot increase the loss).
StepResult line_search(const Problem& P, const VectorXd& r, const VectorXd& a,
                       const std::vector<char>& zero, bool force_first) {
  struct Kink {
    double t;
    double jump;
    Index row;
  };
  std::vector<Kink> kinks;
  double slope = 0.0;
  const double tau = P.tau;
  for (Index i = 0; i < r.size(); ++i) {
    const double ai = a[i];
    if (ai == 0.0) continue;
    const double wi = P.w[i];
    if (zero[static_cast<std::size_t>(i)]) {
      slope += wi * (ai > 0.0 ? ai * (1.0 - tau) : -ai * tau);
      continue;
    }
    slope -= wi * ai * psi(tau, r[i]);
    const double t = r[i] / ai;
    if (t > 0.0) kinks.push_back({t, wi * std::abs(ai), i});
  }
  StepResult res;
  res.slope0 = slope;
  if (slope >= 0.0 && !force_first) return res;
  std::sort(kinks.begin(), kinks.end(), [](const Kink& l, const Kink& rr) {
    return l.t < rr.t || (l.t == rr.t && l.row < rr.row);
  });
  bool moved = false;
  for (const Kink& k : kinks) {
    if (slope >= 0.0 && (moved || !force_first)) break;
    res.t = k.t;
    res.landing = k.row;
    slope += k.jump;
    moved = true;
  }
  if (slope < 0.0) throw NumericError("pinball loss unbounded below along a search direction");
  return res;
}

VectorXd residuals(const Problem& P, const VectorXd& theta) { return P.y - P.Z * theta; }

// Orthonormal basis of {d : z_b' d = 0 for b in basis}.
MatrixXd null_space(const Problem& P, const std::vector<Index>& basis) {
  const Index k = P.Z.cols();
  if (basis.empty()) return MatrixXd::Identity(k, k);
  MatrixXd ZB(static_cast<Index>(basis.size()), k);
  for (std::size_t j = 0; j < basis.size(); ++j) ZB.row(static_cast<Index>(j)) = P.Z.row(basis[j]);
  Eigen::JacobiSVD<MatrixXd> svd(ZB, Eigen::ComputeFullV);
  return svd.matrixV().rightCols(k - static_cast<Index>(basis.size()));
}

bool independent_of(const MatrixXd& N, const VectorXd& z) {
  if (N.cols() == 0) return false;
  const double zn = z.norm();
  return zn > 0.0 && (N.transpose() * z).norm() > 1e-9 * zn;
}

std::vector<char> zero_mask(const Problem& P, const VectorXd& r) {
  std::vector<char> m(static_cast<std::size_t>(r.size()));
  for (Index i = 0; i < r.size(); ++i) m[static_cast<std::size_t>(i)] = std::abs(r[i]) <= P.tol[i];
  return m;
}

// Move from theta to a vertex without increasing the loss.
void purify(const Problem& P, VectorXd& theta, std::vector<Index>& basis, int& pivots,
            int max_pivots) {
  const Index k = P.Z.cols();
  basis.clear();
  VectorXd r = residuals(P, theta);
  auto add_zero_rows = [&]() {
    std::vector<Index> order;
    for (Index i = 0; i < r.size(); ++i) {
      if (std::abs(r[i]) <= P.tol[i]) order.push_back(i);
    }
    std::stable_sort(order.begin(), order.end(),
                     [&](Index l, Index rr) { return std::abs(r[l]) < std::abs(r[rr]); });
    for (Index i : order) {
      if (static_cast<Index>(basis.size()) == k) break;
      if (std::find(basis.begin(), basis.end(), i) != basis.end()) continue;
      if (independent_of(null_space(P, basis), P.Z.row(i).transpose())) basis.push_back(i);
    }
  };
  add_zero_rows();
  while (static_cast<Index>(basis.size()) < k) {
    if (++pivots > max_pivots) throw NumericError("vertex purification exceeded the pivot limit");
    const MatrixXd N = null_space(P, basis);
    const auto zero = zero_mask(P, r);
    VectorXd g = VectorXd::Zero(k);
    for (Index i = 0; i < r.size(); ++i) {
      if (!zero[static_cast<std::size_t>(i)]) g += P.w[i] * psi(P.tau, r[i]) * P.Z.row(i).transpose();
    }
    VectorXd d = N * (N.transpose() * g);
    if (d.norm() <= 1e-14 * (1.0 + g.norm())) d = N.col(0);
    VectorXd a = P.Z * d;
    StepResult step = line_search(P, r, a, zero, false);
    if (step.slope0 > 0.0) {
      d = -d;
      a = -a;
      step = line_search(P, r, a, zero, false);
    }
    if (step.landing < 0) {
      // flat or ascending both ways at first order: walk to the nearest kink
      step = line_search(P, r, a, zero, true);
      if (step.landing < 0) {
        d = -d;
        a = -a;
        step = line_search(P, r, a, zero, true);
      }
      if (step.landing < 0) throw NumericError("no kink reachable while purifying to a vertex");
    }
    theta += step.t * d;
    r = residuals(P, theta);
    r[step.landing] = 0.0;
    basis.push_back(step.landing);
    for (Index b : basis) r[b] = 0.0;
    add_zero_rows();
  }
}

bool solve_basis(const Problem& P, const std::vector<Index>& basis, VectorXd& theta,
                 Eigen::PartialPivLU<MatrixXd>& lu) {
  const Index k = P.Z.cols();
  MatrixXd ZB(k, k);
  VectorXd yB(k);
  for (Index j = 0; j < k; ++j) {
    ZB.row(j) = P.Z.row(basis[static_cast<std::size_t>(j)]);
    yB[j] = P.y[basis[static_cast<std::size_t>(j)]];
  }
  Eigen::JacobiSVD<MatrixXd> svd(ZB);
  const auto sv = svd.singularValues();
  if (sv.size() == 0 || !(sv[sv.size() - 1] > 1e-12 * sv[0])) return false;
  lu.compute(ZB);
  theta = lu.solve(yB);
  return theta.allFinite();
}

// Box-constrained least squares: min || g + M mu ||, mu in [tau-1, tau]^m, by
// cyclic coordinate descent. Returns the residual v = g + M mu.
VectorXd box_residual(const VectorXd& g, const MatrixXd& M, double tau) {
  const Index m = M.cols();
  VectorXd mu = VectorXd::Zero(m);
  VectorXd v = g;
  VectorXd col_sq(m);
  for (Index j = 0; j < m; ++j) col_sq[j] = M.col(j).squaredNorm();
  for (int sweep = 0; sweep < 5000; ++sweep) {
    double change = 0.0;
    for (Index j = 0; j < m; ++j) {
      if (col_sq[j] == 0.0) continue;
      const double target = std::clamp(mu[j] - M.col(j).dot(v) / col_sq[j], tau - 1.0, tau);
      const double delta = target - mu[j];
      if (delta != 0.0) {
        v += delta * M.col(j);
        mu[j] = target;
        change = std::max(change, std::abs(delta));
      }
    }
    if (change < 1e-15) break;
  }
  return v;
}

}  // namespace

DescentResult vertex_descent(const MatrixXd& Z, const VectorXd& y, const VectorXd& w, double tau,
                             const VectorXd& start, const std::vector<Index>* start_basis,
                             int max_pivots) {
  const Index n = Z.rows();
  const Index k = Z.cols();
  Problem P{Z, y, w, tau, VectorXd(n), 0.0};
  for (Index i = 0; i < n; ++i) {
    P.tol[i] = zero_tol(y[i]);
    P.row_scale += w[i] * Z.row(i).cwiseAbs().sum();
  }

  DescentResult out;
  VectorXd theta = start;
  std::vector<Index> basis;
  Eigen::PartialPivLU<MatrixXd> lu;

  if (start_basis != nullptr) {
    basis = *start_basis;
    if (!solve_basis(P, basis, theta, lu)) {
      throw NumericError("warm-start basis is singular");
    }
  } else {
    purify(P, theta, basis, out.pivots, max_pivots);
  }

  while (true) {
    if (++out.pivots > max_pivots) throw NumericError("vertex descent exceeded the pivot limit");
    if (!solve_basis(P, basis, theta, lu)) {
      // numerically singular basis: re-purify from the current point
      purify(P, theta, basis, out.pivots, max_pivots);
      continue;
    }
    VectorXd r = residuals(P, theta);
    std::vector<char> in_basis(static_cast<std::size_t>(n), 0);
    for (Index b : basis) {
      in_basis[static_cast<std::size_t>(b)] = 1;
      r[b] = 0.0;
    }
    auto zero = zero_mask(P, r);
    std::vector<Index> degenerate;
    VectorXd g = VectorXd::Zero(k);
    double loss = 0.0;
    for (Index i = 0; i < n; ++i) {
      loss += w[i] * pinball(tau, r[i]);
      if (zero[static_cast<std::size_t>(i)]) {
        if (!in_basis[static_cast<std::size_t>(i)]) degenerate.push_back(i);
      } else {
        g += w[i] * psi(tau, r[i]) * Z.row(i).transpose();
      }
    }
    if (loss == 0.0) {
      out.optimal = true;
      break;
    }

    // Edge directions d_j = Z_B^{-1} e_j move row j off its kink.
    const MatrixXd D = lu.inverse();
    const VectorXd lambda = D.transpose() * g;
    double best = 0.0;
    Index best_j = -1;
    double best_sign = 0.0;
    for (Index j = 0; j < k; ++j) {
      const VectorXd dj = D.col(j);
      double deg_plus = 0.0;
      double deg_minus = 0.0;
      for (Index i : degenerate) {
        const double a = Z.row(i).dot(dj);
        deg_plus += w[i] * pinball(tau, -a);
        deg_minus += w[i] * pinball(tau, a);
      }
      const double wj = w[basis[static_cast<std::size_t>(j)]];
      const double dplus = -lambda[j] + wj * (1.0 - tau) + deg_plus;
      const double dminus = lambda[j] + wj * tau + deg_minus;
      const double eps = 1e-12 * (std::abs(lambda[j]) + wj + P.row_scale * dj.cwiseAbs().sum());
      if (dplus < -eps && dplus < best) {
        best = dplus;
        best_j = j;
        best_sign = 1.0;
      }
      if (dminus < -eps && dminus < best) {
        best = dminus;
        best_j = j;
        best_sign = -1.0;
      }
    }

    if (best_j >= 0) {
      const VectorXd d = best_sign * D.col(best_j);
      const VectorXd a = Z * d;
      for (Index b : basis) zero[static_cast<std::size_t>(b)] = 1;
      const StepResult step = line_search(P, r, a, zero, false);
      if (step.landing < 0 || step.t <= 0.0) {
        out.optimal = true;  // no strict descent available numerically
        break;
      }
      theta += step.t * d;
      basis[static_cast<std::size_t>(best_j)] = step.landing;
      continue;
    }
    if (degenerate.empty()) {
      out.optimal = true;
      break;
    }

    // Degenerate vertex: test 0 in the subdifferential over all kink rows.
    std::vector<Index> kink_rows = basis;
    kink_rows.insert(kink_rows.end(), degenerate.begin(), degenerate.end());
    MatrixXd M(k, static_cast<Index>(kink_rows.size()));
    for (std::size_t j = 0; j < kink_rows.size(); ++j) {
      M.col(static_cast<Index>(j)) = w[kink_rows[j]] * Z.row(kink_rows[j]).transpose();
    }
    const VectorXd v = box_residual(g, M, tau);
    if (v.norm() <= 1e-10 * (1.0 + P.row_scale)) {
      out.optimal = true;
      break;
    }
    const VectorXd a = Z * v;
    const StepResult step = line_search(P, r, a, zero, false);
    if (step.slope0 >= -1e-14 * (1.0 + P.row_scale) * v.norm() || step.t <= 0.0) {
      out.optimal = true;
      break;
    }
    theta += step.t * v;
    purify(P, theta, basis, out.pivots, max_pivots);
  }

  out.theta = theta;
  out.basis = basis;
  return out;
}

}  // namespace tsqr::qreg::detail
