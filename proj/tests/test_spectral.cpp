#include <cmath>
#include <numbers>

#include "doctest.h"
#include "hrmt/errors.hpp"
#include "hrmt/quadrature.hpp"
#include "hrmt/spectral.hpp"

using namespace hrmt;

namespace {

constexpr auto W = BackgroundClass::Wishart;
constexpr auto IW = BackgroundClass::InverseWishart;

std::vector<double> log_grid(double lo, double hi, int n) {
  std::vector<double> g(n);
  for (int i = 0; i < n; ++i) g[i] = lo * std::pow(hi / lo, i / double(n - 1));
  return g;
}

std::vector<double> lin_grid(double lo, double hi, int n) {
  std::vector<double> g(n);
  for (int i = 0; i < n; ++i) g[i] = lo + (hi - lo) * i / double(n - 1);
  return g;
}

double first_moment(const EsdCurve& c) {
  double m = 0.0;
  for (std::size_t i = 1; i < c.lambdas.size(); ++i) {
    m += 0.5 * (c.lambdas[i] * c.rho[i] + c.lambdas[i - 1] * c.rho[i - 1]) *
         (c.lambdas[i] - c.lambdas[i - 1]);
  }
  return m;
}

double slope(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sx += x[i];
    sy += y[i];
    sxx += x[i] * x[i];
    sxy += x[i] * y[i];
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

}  // namespace

TEST_SUITE("spectral") {

TEST_CASE("MP edges and density") {
  const auto [lo, hi] = mp_edges(0.29, 424.0 / 1259.0);
  CHECK(hi == doctest::Approx(0.7243).epsilon(1e-4));
  CHECK(lo == doctest::Approx(0.05106).epsilon(1e-3));
  CHECK(mp_density(0.5, 0.5, 0.01) == 0.0);
  CHECK(mp_density(0.5, 0.5, 3.0) == 0.0);
  const auto [l, h] = mp_edges(0.5, 0.5);
  const auto mass = quad::integrate(
      [](double x) { return mp_density(0.5, 0.5, x); }, l, h, {1e-12, 1e-10, 4000});
  CHECK(mass.value == doctest::Approx(1.0).epsilon(1e-8));
  CHECK_THROWS_AS(mp_edges(1.0, 1.5), DomainError);
  CHECK_THROWS_AS(SpectralModel(BackgroundModel::delta(1.0), 0.0), DomainError);
}

TEST_CASE("inverse resolvent values") {
  const SpectralModel mp(BackgroundModel::delta(1.0), 0.5);
  const cplx z = inverse_resolvent(mp, -1.0);
  CHECK(z.real() == doctest::Approx(-1.0 / 3.0).epsilon(1e-14));
  CHECK(z.imag() == 0.0);
  CHECK_THROWS_AS(inverse_resolvent(mp, 0.0), DomainError);
  CHECK_THROWS_AS(inverse_resolvent(mp, 2.0), DomainError);

  for (auto cls : {W, IW}) {
    const SpectralModel m(BackgroundModel::uniform(cls, 2, 2.0, 0.7), 0.4);
    const cplx g(1e-7, -1e-7);
    CHECK(std::abs(inverse_resolvent(m, g) - 1.0 / g - 0.7) <= 1e-5);
  }

  // Riemann-sum oracle for f(eps) = exp(-eps).
  const SpectralModel w1(BackgroundModel::uniform(W, 1, 1.0, 1.0), 0.5);
  const cplx g(0.1, 0.1);
  const long n = 1000000;
  const double h = 60.0 / n;
  cplx s = 0.0;
  for (long i = 0; i < n; ++i) {
    const double e = (i + 0.5) * h;
    s += std::exp(-e) * e / (1.0 - 0.5 * g * e) * h;
  }
  CHECK(std::abs(inverse_resolvent(w1, g) - (1.0 / g + s)) <= 1e-6);

  // Pole on the real contour.
  CHECK_THROWS_AS(inverse_resolvent(w1, 2.0), DomainError);
  CHECK_NOTHROW(inverse_resolvent(w1, -2.0));

  // Derivative against a central difference.
  const InverseResolvent zf(w1);
  const cplx g0(0.8, -0.3);
  const double step = 1e-6;
  const cplx fd = (zf(g0 + step) - zf(g0 - step)) / (2.0 * step);
  CHECK(std::abs(zf.evaluate(g0).second - fd) <= 1e-6 * std::abs(fd));
}

TEST_CASE("resolvent branch and residual") {
  const SpectralModel mp(BackgroundModel::delta(0.5), 0.5);
  for (double lam : {0.05, 0.2, 0.5, 1.0, 1.4, 3.0}) {
    const auto s = resolvent(mp, lam, 1e-4);
    REQUIRE(s.converged);
    CHECK(std::abs(s.g - mp_resolvent(0.5, 0.5, cplx(lam, 1e-4))) <= 1e-10);
  }
  for (auto cls : {W, IW}) {
    const double eps0 = 0.6;
    const SpectralModel m(BackgroundModel::uniform(cls, 2, 1.5, eps0), 0.3);
    const double lam = 100.0 * eps0;
    const auto s = resolvent(m, lam, 1e-4);
    REQUIRE(s.converged);
    CHECK(std::abs(s.g - 1.0 / lam) <= 2.0 * eps0 / (lam * lam));

    const InverseResolvent zf(m);
    const auto path = resolvent_path(zf, log_grid(0.01, 10.0, 200), 3e-4);
    for (const auto& p : path) {
      REQUIRE(p.converged);
      CHECK(p.g.imag() < 0.0);
      CHECK(std::abs(zf(p.g) - cplx(p.lambda, 3e-4)) <= 1e-10);
    }
  }
  CHECK_THROWS_AS(resolvent(mp, 1.0, 0.0), DomainError);
  CHECK_THROWS_AS(resolvent(mp, -1.0, 1e-3), DomainError);
}

TEST_CASE("MP reduction of the general engine") {
  for (auto [q, eps0] : {std::pair{0.5, 0.5}, std::pair{0.34, 0.29}}) {
    const SpectralModel m(BackgroundModel::delta(eps0), q);
    const auto [lo, hi] = mp_edges(eps0, q);
    const auto grid = lin_grid(0.5 * lo, 1.2 * hi, 1500);
    const auto c = esd_curve(m, grid);
    const double w = 0.01 * (hi - lo);
    double sup = 0.0;
    for (std::size_t i = 0; i < grid.size(); ++i) {
      REQUIRE(c.converged[i]);
      CHECK(c.rho[i] >= 0.0);
      if (std::abs(grid[i] - lo) < w || std::abs(grid[i] - hi) < w) continue;
      sup = std::max(sup, std::abs(c.rho[i] - mp_density(eps0, q, grid[i])));
    }
    CHECK(sup <= 1e-3);
    CHECK(c.mass == doctest::Approx(1.0).epsilon(1e-3));
    CHECK(first_moment(c) == doctest::Approx(eps0).epsilon(1e-3));
    CHECK(c.bulk_edge_lower == doctest::Approx(lo).epsilon(0.02));
  }
}

TEST_CASE("unit mass and mean for hierarchical models") {
  struct Case {
    BackgroundClass cls;
    int n;
    double beta, eps0, q, top;
  };
  for (const Case& k : {Case{W, 1, 1.0, 0.5, 0.5, 20.0},
                        Case{W, 2, 1.13, 0.43, 424.0 / 1259.0, 20.0},
                        Case{IW, 1, 2.0, 1.0, 0.5, 2000.0}}) {
    const SpectralModel m(BackgroundModel::uniform(k.cls, k.n, k.beta, k.eps0), k.q);
    const auto c = esd_curve(m, log_grid(1e-3 * k.eps0, k.top, 1500));
    CAPTURE(k.n);
    CAPTURE(k.beta);
    CHECK(c.mass == doctest::Approx(1.0).epsilon(1e-3));
    CHECK(first_moment(c) == doctest::Approx(k.eps0).epsilon(1e-3));
    for (std::size_t i = 0; i < c.rho.size(); ++i) {
      CHECK(c.converged[i]);
      CHECK(c.rho[i] >= 0.0);
    }
  }
}

TEST_CASE("regression fixture at fitted market parameters") {
  const SpectralModel m(BackgroundModel::uniform(W, 2, 1.13, 0.43), 424.0 / 1259.0);
  const std::vector<double> grid = {0.05, 0.1, 0.2, 0.4, 0.8, 1.6};
  const auto c = esd_curve(m, grid);
  const std::vector<double> expected = {3.47851397481, 2.61775315721, 1.55895270612,
                                       0.786378046573, 0.311400268897,
                                       0.0676659199539};
  for (std::size_t i = 0; i < grid.size(); ++i) {
    CHECK(c.rho[i] == doctest::Approx(expected[i]).epsilon(1e-6));
  }
}

TEST_CASE("tail laws") {
  for (double beta : {1.0, 2.0}) {
    const SpectralModel m(BackgroundModel::uniform(IW, 1, beta, 1.0), 0.5);
    const auto grid = log_grid(100.0, 1000.0, 60);
    const auto c = esd_curve(m, grid);
    std::vector<double> x, y;
    for (std::size_t i = 0; i < grid.size(); ++i) {
      REQUIRE(c.converged[i]);
      x.push_back(std::log(grid[i]));
      y.push_back(std::log(c.rho[i]));
    }
    CHECK(slope(x, y) == doctest::Approx(-beta - 2.0).epsilon(0.05));
    // Asymptotic form has the same slope.
    std::vector<double> ya;
    for (double l : grid) ya.push_back(std::log(esd_tail(m, l)));
    CHECK(slope(x, ya) == doctest::Approx(-beta - 2.0).epsilon(1e-6));
  }
  {
    const SpectralModel m(BackgroundModel::uniform(W, 2, 1.0, 0.5), 0.5);
    const auto grid = log_grid(5.0, 50.0, 60);
    const auto c = esd_curve(m, grid);
    std::vector<double> x, y;
    for (std::size_t i = 0; i < grid.size(); ++i) {
      REQUIRE(c.converged[i]);
      x.push_back(std::sqrt(grid[i]));
      y.push_back(std::log(c.rho[i]));
    }
    CHECK(slope(x, y) == doctest::Approx(-4.0).epsilon(0.10));
  }
  {
    // N = 1 Wishart: pure exponential factor.
    const SpectralModel m(BackgroundModel::uniform(W, 1, 1.0, 0.5), 0.5);
    std::vector<double> x, y;
    for (int i = 0; i <= 20; ++i) {
      x.push_back(5.0 + i);
      y.push_back(std::log(esd_tail(m, x.back())));
    }
    CHECK(slope(x, y) == doctest::Approx(-4.0).epsilon(1e-9));
  }
}

TEST_CASE("tail consistency") {
  {
    const SpectralModel m(BackgroundModel::uniform(IW, 1, 3.0, 1.0), 0.5);
    const auto r = tail_consistency(m, log_grid(20.0, 400.0, 60));
    CHECK(r.sufficient);
    CHECK(r.drift <= 0.15);
    CHECK(r.passed);
  }
  {
    // Exponential tails approach the limit with an exp(c / lambda)
    // correction, so a decade-wide window stays well above 15% drift at any
    // resolvable density; only the approach from above is asserted.
    const SpectralModel m(BackgroundModel::uniform(W, 1, 2.0, 1.0), 0.5);
    const auto r = tail_consistency(m, log_grid(5.0, 8.5, 20));
    CHECK(r.sufficient);
    for (std::size_t i = 1; i < r.ratios.size(); ++i) {
      CHECK(r.ratios[i] < r.ratios[i - 1]);
    }
    CHECK(r.ratios.back() > r.expected_limit);
  }
  {
    const SpectralModel m(BackgroundModel::uniform(W, 1, 2.0, 1.0), 0.5);
    const auto r = tail_consistency(m, log_grid(40.0, 80.0, 10));
    CHECK_FALSE(r.sufficient);
    CHECK_FALSE(r.passed);
  }
  CHECK_THROWS_AS(tail_consistency(SpectralModel(BackgroundModel::delta(1.0), 0.5),
                                   log_grid(1.0, 10.0, 10)),
                  DomainError);
}

TEST_CASE("peak responds monotonically to N and beta") {
  const auto grid = log_grid(1e-4, 5.0, 700);
  std::vector<std::pair<double, double>> by_n, by_beta;
  for (int n : {1, 2, 3}) {
    const SpectralModel m(BackgroundModel::uniform(W, n, 1.0, 0.5), 0.5);
    by_n.push_back(curve_peak(esd_curve(m, grid)));
  }
  for (double beta : {0.5, 1.0, 1.5}) {
    const SpectralModel m(BackgroundModel::uniform(W, 1, beta, 0.5), 0.5);
    by_beta.push_back(curve_peak(esd_curve(m, grid)));
  }
  for (int i = 0; i < 2; ++i) {
    CHECK(by_n[i + 1].second > by_n[i].second);
    CHECK(by_n[i + 1].first < by_n[i].first);
    CHECK(by_beta[i + 1].second < by_beta[i].second);
    CHECK(by_beta[i + 1].first > by_beta[i].first);
  }
}

TEST_CASE("argument validation") {
  const SpectralModel m(BackgroundModel::uniform(W, 1, 1.0, 1.0), 0.5);
  const std::vector<double> bad = {1.0, 0.5};
  const std::vector<double> ok = {0.5, 1.0};
  const std::vector<double> rising = {1e-4, 1e-3};
  CHECK_THROWS_AS(esd_curve(m, bad), DomainError);
  CHECK_THROWS_AS(esd_curve(m, ok, rising), DomainError);
}

}  // TEST_SUITE
