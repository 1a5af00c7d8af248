#include <algorithm>
#include <cmath>
#include <limits>

#include "tsqr/qreg.hpp"

namespace tsqr::qreg::detail {

namespace {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

constexpr double kBig = 1e20;

double max_step(const VectorXd& v, const VectorXd& dv) {
  double f = kBig;
  for (Index i = 0; i < v.size(); ++i) {
    if (dv[i] < 0.0) f = std::min(f, -v[i] / dv[i]);
  }
  return f;
}

}  // namespace

// Bounded-variable primal-dual method in the form
//   min c'x  s.t.  A x = b,  0 <= x <= 1
// with A = X~', c = -y~, b = (1 - tau) X~' 1; the dual multiplier on A x = b
// is minus the regression coefficient.
InteriorPointResult interior_point(const MatrixXd& Z, const VectorXd& yv, const VectorXd& wv,
                                   double tau, double gap_tol, int max_iter) {
  const Index n = Z.rows();
  const Index k = Z.cols();
  const MatrixXd X = wv.asDiagonal() * Z;  // n x k, A = X'
  const VectorXd c = -(wv.array() * yv.array()).matrix();
  const VectorXd b = (1.0 - tau) * X.colwise().sum().transpose();
  constexpr double beta = 0.9995;

  VectorXd x = VectorXd::Constant(n, 1.0 - tau);
  VectorXd s = VectorXd::Ones(n) - x;
  VectorXd dual = (X.transpose() * X).ldlt().solve(X.transpose() * c);
  VectorXd r = c - X * dual;
  for (Index i = 0; i < n; ++i) {
    if (r[i] == 0.0) r[i] = 0.001;
  }
  VectorXd z = r.cwiseMax(0.0);
  VectorXd w = z - r;
  auto gap_of = [&]() { return c.dot(x) - dual.dot(b) + w.sum(); };
  double gap = gap_of();

  InteriorPointResult res;
  const double scale = 1.0 + std::abs(c.dot(x));
  int it = 0;
  while (gap > gap_tol * scale && it < max_iter) {
    ++it;
    // affine-scaling predictor
    const VectorXd q = ((z.array() / x.array()) + (w.array() / s.array())).inverse().matrix();
    r = z - w;
    const MatrixXd AQA = X.transpose() * q.asDiagonal() * X;
    const Eigen::LDLT<MatrixXd> chol(AQA);
    VectorXd rhs = (q.array() * r.array()).matrix();
    VectorXd dy = chol.solve(X.transpose() * rhs);
    VectorXd dx = (q.array() * ((X * dy) - r).array()).matrix();
    VectorXd ds = -dx;
    VectorXd dz = (-z.array() * (dx.array() / x.array() + 1.0)).matrix();
    VectorXd dw = (-w.array() * (ds.array() / s.array() + 1.0)).matrix();

    double fp = std::min(1.0, beta * std::min(max_step(x, dx), max_step(s, ds)));
    double fd = std::min(1.0, beta * std::min(max_step(w, dw), max_step(z, dz)));

    if (std::min(fp, fd) < 1.0) {
      // Mehrotra corrector with adaptive centring
      double mu = z.dot(x) + w.dot(s);
      const double g = (z + fd * dz).dot(x + fp * dx) + (w + fd * dw).dot(s + fp * ds);
      mu = mu * std::pow(g / mu, 3) / (2.0 * static_cast<double>(n));
      const VectorXd dxdz = (dx.array() * dz.array()).matrix();
      const VectorXd dsdw = (ds.array() * dw.array()).matrix();
      const VectorXd xinv = x.cwiseInverse();
      const VectorXd sinv = s.cwiseInverse();
      const VectorXd xi = mu * (xinv - sinv);
      rhs += (q.array() * (dxdz - dsdw - xi).array()).matrix();
      dy = chol.solve(X.transpose() * rhs);
      dx = (q.array() * ((X * dy) + xi - r - dxdz + dsdw).array()).matrix();
      ds = -dx;
      dz = (mu * xinv.array() - z.array() - xinv.array() * z.array() * dx.array() - dxdz.array())
               .matrix();
      dw = (mu * sinv.array() - w.array() - sinv.array() * w.array() * ds.array() - dsdw.array())
               .matrix();
      fp = std::min(1.0, beta * std::min(max_step(x, dx), max_step(s, ds)));
      fd = std::min(1.0, beta * std::min(max_step(w, dw), max_step(z, dz)));
    }
    x += fp * dx;
    s += fp * ds;
    dual += fd * dy;
    w += fd * dw;
    z += fd * dz;
    gap = gap_of();
    if (!std::isfinite(gap) || !dual.allFinite()) {
      res.finite = false;
      break;
    }
  }
  res.theta = -dual;
  res.iterations = it;
  res.gap = std::isfinite(gap) ? gap / scale : std::numeric_limits<double>::infinity();
  res.converged = res.finite && gap <= gap_tol * scale;
  (void)k;
  return res;
}

VectorXd smoothing_homotopy(const MatrixXd& Z, const VectorXd& y, const VectorXd& w, double tau,
                            const VectorXd& start) {
  const Index n = Z.rows();
  const Index k = Z.cols();
  VectorXd theta = start;
  // Huberized pinball: quadratic x^2/(4h) + (tau - 1/2) x + h/4 on |x| <= h.
  auto loss = [&](const VectorXd& th, double h) {
    const VectorXd r = y - Z * th;
    double acc = 0.0;
    for (Index i = 0; i < n; ++i) {
      const double x = r[i];
      acc += w[i] * (std::abs(x) <= h ? x * x / (4.0 * h) + (tau - 0.5) * x + 0.25 * h
                                      : pinball(tau, x));
    }
    return acc;
  };
  for (double h : {1e-2, 1e-4, 1e-6}) {
    for (int it = 0; it < 100; ++it) {
      const VectorXd r = y - Z * theta;
      VectorXd grad = VectorXd::Zero(k);
      MatrixXd H = MatrixXd::Zero(k, k);
      for (Index i = 0; i < n; ++i) {
        const double x = r[i];
        const auto zi = Z.row(i).transpose();
        double d1;
        if (std::abs(x) <= h) {
          d1 = x / (2.0 * h) + tau - 0.5;
          H.noalias() += (w[i] / (2.0 * h)) * zi * zi.transpose();
        } else {
          d1 = psi(tau, x);
        }
        grad -= w[i] * d1 * zi;
      }
      H += 1e-10 * (1.0 + H.diagonal().cwiseAbs().maxCoeff()) * MatrixXd::Identity(k, k);
      VectorXd step = H.ldlt().solve(grad);
      if (!step.allFinite() || step.norm() == 0.0) break;
      const double f0 = loss(theta, h);
      double t = 1.0;
      bool improved = false;
      for (int ls = 0; ls < 40; ++ls, t *= 0.5) {
        const VectorXd cand = theta - t * step;
        if (loss(cand, h) < f0) {
          theta = cand;
          improved = true;
          break;
        }
      }
      if (!improved || t * step.norm() < 1e-14 * (1.0 + theta.norm())) break;
    }
  }
  return theta;
}

}  // namespace tsqr::qreg::detail
