#include "doctest.h"

#include <sstream>

#include "oracles.hpp"
#include "tsqr/dgp.hpp"
#include "tsqr/errors.hpp"
#include "tsqr/sqe.hpp"

using namespace tsqr;
using namespace tsqr::sqe;

TEST_CASE("grid construction") {
  const auto g = TauGrid::make();
  CHECK(g.levels.size() == 91);
  CHECK(g.lower() == doctest::Approx(0.05));
  CHECK(g.upper() == doctest::Approx(0.95));
  for (std::size_t i = 1; i < g.levels.size(); ++i) CHECK(g.levels[i] > g.levels[i - 1]);
  CHECK(g.index_of(0.5) == 45);
  CHECK(g.index_of(0.505) == -1);
  CHECK(g.nearest(0.5049) == 45);
  const auto odd = TauGrid::make(0.1, 0.3);
  CHECK(odd.upper() == doctest::Approx(0.9));
  CHECK(odd.levels.size() == 4);
  CHECK_THROWS_AS((void)TauGrid::make(0.0, 0.01), InvalidInput);
  CHECK_THROWS_AS((void)TauGrid::make(0.5, 0.01), InvalidInput);
  CHECK_THROWS_AS((void)TauGrid::make(0.05, 0.0), InvalidInput);
}

TEST_CASE("warm and cold paths agree") {
  const auto s = dgp::find_dgp("asym_tvarch").simulate(1000, 12);
  const auto d = qreg::build_design(s, 1, true);
  const auto warm = estimate_path(d, qreg::WeightSpec::power(2.0), TauGrid::make());
  PathOptions cold_opts;
  cold_opts.warm_start = false;
  cold_opts.threads = 2;
  const auto cold = estimate_path(d, qreg::WeightSpec::power(2.0), TauGrid::make(), cold_opts);
  REQUIRE(warm.estimates.size() == 91);
  for (std::size_t i = 0; i < warm.estimates.size(); ++i) {
    CHECK(std::abs(warm.estimates[i].objective - cold.estimates[i].objective) <=
          1e-9 * (1.0 + cold.estimates[i].objective));
    CHECK(warm.estimates[i].converged);
    CHECK(warm.estimates[i].subgradient_norm_certificate <= 0.0);
  }
}

TEST_CASE("iid series: intercept path is monotone and matches weighted quantiles") {
  const auto s = dgp::simulate_series(dgp::ThetaVector{0.0, {0.0}}, dgp::InnovationSpec::student_t(2.0),
                                      dgp::VolatilitySpec::constant(1.0), 500, 200, 21);
  const auto d = qreg::build_design(s, 1, true);
  const auto path = estimate_path(d, qreg::WeightSpec::power(2.0), TauGrid::make());
  std::size_t monotone = 0;
  for (std::size_t i = 1; i < path.estimates.size(); ++i) {
    monotone += path.estimates[i].theta_hat[0] >= path.estimates[i - 1].theta_hat[0] - 1e-8 ? 1 : 0;
  }
  CHECK(static_cast<double>(monotone) >= 0.95 * static_cast<double>(path.estimates.size() - 1));

  // intercept-only weighted fit on the same rows is the weighted sample quantile
  qreg::LaggedDesign io = d;
  io.rows = Eigen::MatrixXd::Ones(d.size(), 1);
  const auto paths_io = estimate_path(io, qreg::WeightSpec::power(2.0), TauGrid::make(0.05, 0.05));
  std::vector<double> y(d.responses.data(), d.responses.data() + d.size());
  std::vector<double> w(path.weights.data(), path.weights.data() + path.weights.size());
  for (std::size_t i = 0; i < paths_io.estimates.size(); ++i) {
    const double tau = paths_io.grid.levels[i];
    const double q = oracles::weighted_quantile(y, w, tau);
    const double at_q = qreg::weighted_loss(io, path.weights, tau, Eigen::VectorXd::Constant(1, q));
    CHECK(paths_io.estimates[i].objective == doctest::Approx(at_q).epsilon(1e-12));
  }
}

TEST_CASE("path_at and solve_at") {
  const auto s = dgp::find_dgp("asym_arch").simulate(600, 3);
  const auto d = qreg::build_design(s, 1, true);
  const auto path = estimate_path(d, qreg::WeightSpec::power(2.0), TauGrid::make());
  CHECK(path_at(path, 0.5) == path.estimates[45].theta_hat);
  const double tau = 0.5037;
  const auto mid = solve_at(path, tau);
  const double lo = qreg::weighted_loss(d, path.weights, tau, path.estimates[45].theta_hat);
  const double hi = qreg::weighted_loss(d, path.weights, tau, path.estimates[46].theta_hat);
  CHECK(mid.objective <= lo + 1e-15);
  CHECK(mid.objective <= hi + 1e-15);
  CHECK_THROWS_AS((void)path_at(path, 0.999), RangeError);
  CHECK_THROWS_AS((void)path_at(path, 0.01), RangeError);
  std::ostringstream os;
  write_path_csv(os, path);
  CHECK(os.str().rfind("tau,coef_0,coef_1,objective\n", 0) == 0);
}

TEST_CASE("symmetric intercept-free GARCH: flat path") {
  const auto& dg = dgp::find_dgp("sym_garch");
  const auto s = dg.simulate(2000, 8);
  const auto d = qreg::build_design(s, 1, false);
  const auto path = estimate_path(d, qreg::WeightSpec::power(2.0), TauGrid::make());
  const auto mid = path_at(path, 0.5);
  double worst = 0.0;
  for (const auto& e : path.estimates) worst = std::max(worst, (e.theta_hat - mid).cwiseAbs().maxCoeff());
  CHECK(worst <= 0.15);
}

TEST_CASE("level failures carry the level") {
  LevelFailure f(0.42, "boom");
  CHECK(f.tau() == 0.42);
}
