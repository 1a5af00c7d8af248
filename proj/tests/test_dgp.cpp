#include "doctest.h"

#include <cmath>
#include <complex>
#include <random>
#include <sstream>

#include "tsqr/dgp.hpp"
#include "tsqr/errors.hpp"
#include "tsqr/rng.hpp"
#include "tsqr/series_io.hpp"

using namespace tsqr;
using namespace tsqr::dgp;

namespace {

// Roots of 1 - a z - b z^2 by the quadratic formula.
std::vector<double> quadratic_root_moduli(double a, double b) {
  using C = std::complex<double>;
  const C disc = std::sqrt(C(a * a + 4.0 * b, 0.0));
  const C r1 = (-a + disc) / (2.0 * b);
  const C r2 = (-a - disc) / (2.0 * b);
  return {std::abs(r1), std::abs(r2)};
}

double lag1_autocorrelation(const std::vector<double>& y) {
  double mean = 0.0;
  for (double v : y) mean += v;
  mean /= static_cast<double>(y.size());
  double num = 0.0;
  double den = 0.0;
  for (std::size_t t = 0; t < y.size(); ++t) {
    den += (y[t] - mean) * (y[t] - mean);
    if (t > 0) num += (y[t] - mean) * (y[t - 1] - mean);
  }
  return num / den;
}

// Independent, deliberately plain AR(1)-ARCH(1) simulator.
std::vector<double> reference_ar1_arch(double mu, double phi, double omega, double a1,
                                       std::size_t n, std::size_t burn, unsigned seed) {
  std::mt19937 gen(seed);
  std::exponential_distribution<double> expo(1.0);
  std::vector<double> out;
  double y_prev = 0.0;
  double eps_prev = 0.0;
  for (std::size_t t = 0; t < n + burn; ++t) {
    const double sigma2 = omega + a1 * eps_prev * eps_prev;
    const double eps = std::sqrt(sigma2) * (expo(gen) - 1.0);
    const double y = mu + phi * y_prev + eps;
    if (t >= burn) out.push_back(y);
    y_prev = y;
    eps_prev = eps;
  }
  return out;
}

}  // namespace

TEST_CASE("stationarity examples") {
  CHECK(check_stationarity(ThetaVector{std::nullopt, {0.5}}));
  CHECK_FALSE(check_stationarity(ThetaVector{std::nullopt, {1.0}}));
  CHECK(check_stationarity(ThetaVector{0.1, {0.5, 0.3}}));
  CHECK_THROWS_AS((void)check_stationarity(ThetaVector{0.0, {std::nan("")}}), InvalidInput);
}

TEST_CASE("AR root moduli agree with the quadratic formula") {
  for (auto [a, b] : {std::pair{0.5, 0.3}, std::pair{0.2, -0.6}, std::pair{1.2, -0.5}}) {
    auto got = ar_root_moduli(ThetaVector{std::nullopt, {a, b}});
    auto want = quadratic_root_moduli(a, b);
    std::sort(got.begin(), got.end());
    std::sort(want.begin(), want.end());
    REQUIRE(got.size() == 2);
    CHECK(got[0] == doctest::Approx(want[0]).epsilon(1e-10));
    CHECK(got[1] == doctest::Approx(want[1]).epsilon(1e-10));
  }
  const auto m = quadratic_root_moduli(0.5, 0.3);
  CHECK(std::min(m[0], m[1]) > 1.0);
}

TEST_CASE("innovation tau0 closed forms") {
  CHECK(innovation_tau0(InnovationSpec::normal()) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(std::abs(innovation_tau0(InnovationSpec::shifted_exponential(1.0)) - (1.0 - std::exp(-1.0))) <
        1e-12);
  CHECK(innovation_tau0(InnovationSpec::student_t(1.5)) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(innovation_tau0(InnovationSpec::skewed_mixture(1.0, 2.0, 0.3, true)) ==
        doctest::Approx(0.3).epsilon(1e-12));
  CHECK(innovation_tau0(InnovationSpec::normal(0.4)) ==
        doctest::Approx(0.5 * std::erfc(-0.4 / std::sqrt(2.0))).epsilon(1e-12));
  CHECK_THROWS_AS(InnovationSpec::skewed_mixture(0.0, 1.0, 0.5, false).validate(), InvalidInput);
}

TEST_CASE("innovation tau0 matches the empirical fraction of 1e7 draws") {
  const std::vector<InnovationSpec> specs{InnovationSpec::shifted_exponential(1.0),
                                          InnovationSpec::student_t(3.0, 0.3),
                                          InnovationSpec::skewed_mixture(1.0, 2.0, 0.35, true, 0.1)};
  for (std::size_t i = 0; i < specs.size(); ++i) {
    InnovationSampler s(specs[i]);
    auto eng = rng::make_stream(99, {i});
    std::size_t below = 0;
    const std::size_t N = 10'000'000;
    for (std::size_t k = 0; k < N; ++k) below += s(eng) <= 0.0 ? 1 : 0;
    CHECK(std::abs(static_cast<double>(below) / N - innovation_tau0(specs[i])) < 1e-3);
  }
}

TEST_CASE("cdf and pdf are consistent") {
  for (const auto& spec : {InnovationSpec::shifted_exponential(1.0), InnovationSpec::student_t(3.0, 0.2),
                           InnovationSpec::skewed_mixture(0.7, 1.5, 0.4, false, 0.1)}) {
    for (double u : {-1.5, -0.3, 0.2, 1.1}) {
      const double h = 1e-5;
      const double fd = (innovation_cdf(spec, u + h) - innovation_cdf(spec, u - h)) / (2 * h);
      CHECK(fd == doctest::Approx(innovation_pdf(spec, u)).epsilon(1e-5));
    }
  }
}

TEST_CASE("iid standard normal degenerate AR") {
  const auto s = simulate_series(ThetaVector{0.0, {0.0}}, InnovationSpec::normal(),
                                 VolatilitySpec::constant(1.0), 100000, 500, 5);
  double mean = 0.0;
  double var = 0.0;
  for (double v : s.values) mean += v;
  mean /= 1e5;
  for (double v : s.values) var += (v - mean) * (v - mean);
  var /= 1e5;
  CHECK(std::abs(mean) < 0.02);
  CHECK(std::abs(var - 1.0) < 0.02);
  CHECK(s.tau0_true == doctest::Approx(0.5));
}

TEST_CASE("same seed gives bit-identical values") {
  const auto& d = find_dgp("skew_heavy");
  const auto a = d.simulate(2000, 17);
  const auto b = d.simulate(2000, 17);
  const auto c = d.simulate(2000, 18);
  CHECK(a.values == b.values);
  CHECK(a.values != c.values);
}

TEST_CASE("lag-1 autocorrelation agrees with a reference simulator") {
  const ThetaVector theta{0.1, {0.5}};
  VolatilitySpec vol = VolatilitySpec::constant(0.2, 0.3);
  const auto s = simulate_series(theta, InnovationSpec::shifted_exponential(1.0), vol, 100000, 500, 3);
  const auto ref = reference_ar1_arch(0.1, 0.5, 0.2, 0.3, 100000, 500, 11);
  CHECK(std::abs(lag1_autocorrelation(s.values) - lag1_autocorrelation(ref)) < 0.05);
}

TEST_CASE("time-varying omega follows the retained-window ratio") {
  VolatilitySpec v;
  v.shape = OmegaShape::sine;
  v.omega0 = 0.2;
  v.omega1 = 0.5;
  CHECK(v.omega(0.25) == doctest::Approx(0.3));
  CHECK(v.omega(0.75) == doctest::Approx(0.1));
  v.shape = OmegaShape::linear;
  v.omega1 = 0.4;
  CHECK(v.omega(1.0) == doctest::Approx(0.6));
  VolatilitySpec g = VolatilitySpec::constant(0.1, 0.1, 0.8);
  CHECK(g.initial_variance() == doctest::Approx(0.5));
  VolatilitySpec bad = VolatilitySpec::constant(0.1);
  bad.shape = OmegaShape::sine;
  bad.omega1 = 1.0;
  CHECK_THROWS_AS(bad.validate(), InvalidInput);
}

TEST_CASE("overflow and invalid input") {
  VolatilitySpec explosive = VolatilitySpec::constant(1.0, 50.0);
  try {
    (void)simulate_series(ThetaVector{0.0, {0.5}}, InnovationSpec::student_t(1.0), explosive, 5000, 500, 1);
    FAIL("expected overflow");
  } catch (const GenerationOverflow& e) {
    CHECK(std::string(e.what()).find("step") != std::string::npos);
    CHECK(e.step() > 0);
  }
  CHECK_THROWS_AS((void)simulate_series(ThetaVector{0.0, {1.2}}, InnovationSpec::normal(),
                                        VolatilitySpec::constant(1.0), 100, 10, 1),
                  InvalidInput);
  CHECK_THROWS_AS((void)find_dgp("nope"), InvalidInput);
}

TEST_CASE("menu entries are valid and asymmetric default has tau0 = 1 - 1/e") {
  for (const auto& d : dgp_menu()) {
    CHECK(check_stationarity(d.theta));
    CHECK_NOTHROW(d.innovation.validate());
    CHECK_NOTHROW(d.volatility.validate());
  }
  const auto& d = find_dgp(default_asymmetric_dgp());
  CHECK(innovation_tau0(d.innovation) == doctest::Approx(1.0 - std::exp(-1.0)));
  CHECK(find_dgp("sym_garch").innovation.symmetric());
  CHECK_FALSE(find_dgp("sym_garch").theta.has_intercept());
}

TEST_CASE("CSV round trip and sidecar") {
  const auto s = find_dgp("asym_arch").simulate(50, 4);
  std::stringstream ss;
  io::write_series_csv(ss, s.values);
  CHECK(ss.str().rfind("t,y\n", 0) == 0);
  const auto back = io::read_series_csv(ss);
  CHECK(back == s.values);
  const auto side = sidecar_json(s);
  CHECK(side.at("seed").get<std::uint64_t>() == 4);
  CHECK(side.at("n").get<std::size_t>() == 50);
  DgpSpec round = nlohmann::json(find_dgp("skew_heavy")).get<DgpSpec>();
  CHECK(round.simulate(30, 2).values == find_dgp("skew_heavy").simulate(30, 2).values);
}

TEST_CASE("malformed CSV reports the line") {
  auto parse = [](const std::string& text) {
    std::istringstream is(text);
    return io::read_series_csv(is);
  };
  CHECK_THROWS_AS(parse("x,y\n1,2\n"), io::CsvError);
  try {
    (void)parse("t,y\n1,0.5\n2,0.7\n3,oops\n");
    FAIL("expected CsvError");
  } catch (const io::CsvError& e) {
    CHECK(e.line() == 4);
  }
  try {
    (void)parse("t,y\n1,0.5\n1,0.7\n");
    FAIL("expected CsvError");
  } catch (const io::CsvError& e) {
    CHECK(e.line() == 3);
  }
}

TEST_CASE("every built-in volatility recursion is strictly stationary") {
  // E log(garch + arch eta^2) < 0, estimated by Monte Carlo
  for (const auto& d : dgp_menu()) {
    if (d.volatility.arch == 0.0) continue;
    InnovationSampler draw(d.innovation);
    auto eng = rng::make_stream(5, {1});
    double acc = 0.0;
    double sq = 0.0;
    const int N = 400000;
    for (int k = 0; k < N; ++k) {
      const double e = draw(eng);
      const double l = std::log(d.volatility.garch + d.volatility.arch * e * e);
      acc += l;
      sq += l * l;
    }
    const double mean = acc / N;
    const double se = std::sqrt((sq / N - mean * mean) / N);
    INFO(d.id);
    CHECK(mean + 5.0 * se < 0.0);
    CHECK_NOTHROW((void)d.simulate(20000, 3));
  }
}
