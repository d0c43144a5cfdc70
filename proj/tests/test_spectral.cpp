#include <cmath>
#include <numbers>

#include "doctest.h"
#include "spde/error.hpp"
#include "spde/measure.hpp"
#include "spde/quadrature.hpp"
#include "spde/spectral.hpp"

using namespace spde;
constexpr double pi = std::numbers::pi;

namespace {

// J_nu by its power series in long double.
long double series_j(long double nu, long double x, int terms = 40) {
  long double s = 0, t = std::pow(x / 2, nu) / std::tgamma(nu + 1);
  for (int k = 0; k < terms; ++k) {
    s += t;
    t *= -(x * x / 4) / ((k + 1) * (k + 1 + nu));
  }
  return s;
}

// Y_n from its integral representation, composite Simpson.
double integral_y(int n, double x) {
  auto a = [&](double th) { return std::sin(x * std::sin(th) - n * th); };
  auto b = [&](double t) {
    return (std::exp(n * t) + (n % 2 ? -1 : 1) * std::exp(-n * t)) * std::exp(-x * std::sinh(t));
  };
  return quad::simpson_refined(a, 0, pi, 1e-13) / pi - quad::simpson_refined(b, 0, 20, 1e-13) / pi;
}

double bisect(const std::function<double(double)>& f, double a, double b) {
  double fa = f(a);
  for (int i = 0; i < 200; ++i) {
    double m = 0.5 * (a + b), fm = f(m);
    if ((fm > 0) == (fa > 0)) {
      a = m;
      fa = fm;
    } else {
      b = m;
    }
  }
  return 0.5 * (a + b);
}

}  // namespace

TEST_CASE("bessel_j") {
  CHECK(std::abs(bessel_j(0.5, pi)) < 1e-15);
  CHECK(bessel_j(0, 0) == 1.0);
  for (double x : {0.3, 1.0, 4.0, 9.5}) {
    CHECK(bessel_j(0, x) == doctest::Approx(double(series_j(0, x))).epsilon(1e-12));
    CHECK(bessel_j(1, x) == doctest::Approx(double(series_j(1, x))).epsilon(1e-12));
    CHECK(bessel_j(1.5, x) == doctest::Approx(double(series_j(1.5, x))).epsilon(1e-12));
  }
  CHECK_THROWS_AS(bessel_j(0, -1), ValidationError);
}

TEST_CASE("bessel_y") {
  CHECK(bessel_y(0, 1e-3) < -4);
  double x = 2;
  double w = bessel_j(0, x) * bessel_y(1, x) - bessel_j(1, x) * bessel_y(0, x);
  CHECK(std::abs(w + 2 / (pi * x)) < 1e-10);
  CHECK(std::abs(bessel_y(0, 5) - integral_y(0, 5)) < 1e-10);
  CHECK(std::abs(bessel_y(1, 5) - integral_y(1, 5)) < 1e-10);
}

TEST_CASE("first bessel zeros") {
  auto z = first_bessel_zero(0.5);
  CHECK(z.z0 == doctest::Approx(pi).epsilon(1e-13));
  auto z0 = first_bessel_zero(0);
  CHECK(z0.z0 > 2.404825);
  CHECK(z0.z0 < 2.404826);
  CHECK(std::abs(bessel_j(0, z0.z0)) < 1e-12);
  double oracle = bisect([](double x) { return double(series_j(0, x)); }, 2, 3);
  CHECK(z0.z0 == doctest::Approx(oracle).epsilon(1e-12));
  auto z1 = first_bessel_zero(1);
  CHECK(z1.z0 > 3.8317);
  CHECK(z1.z0 < 3.8318);
  for (double nu : {0.0, 0.5, 1.0, 1.5, 2.0})
    CHECK(std::abs(first_bessel_zero(nu).derivative) > 1e-3);
}

TEST_CASE("cross product zero") {
  double z = cross_product_zero(1, 3);
  auto F = [](double R1, double R2, double q) {
    return bessel_j(0, R1 * q) * bessel_y(0, R2 * q) - bessel_y(0, R1 * q) * bessel_j(0, R2 * q);
  };
  CHECK(std::abs(F(1, 3, z)) < 1e-10);
  double oracle = bisect([&](double q) { return F(1, 3, q); }, 0.5 * z, 1.1 * z);
  CHECK(z == doctest::Approx(oracle).epsilon(1e-10));
  CHECK(cross_product_zero(2, 6) == doctest::Approx(z / 2).epsilon(1e-9));
  CHECK(cross_product_zero(1, 1.05) > z);
}

TEST_CASE("annulus Z") {
  double R1 = 1, R2 = 3, z0 = cross_product_zero(R1, R2);
  CHECK(std::abs(annulus_Z(R1, R1, R2, z0)) < 1e-12);
  CHECK(std::abs(annulus_Z(R2, R1, R2, z0)) < 1e-9);
  // one-sided fourth-order difference at the wall
  double h = 1e-3;
  auto Z = [&](int k) { return annulus_Z(R1 + k * h, R1, R2, z0); };
  double fd = (-25 * Z(0) + 48 * Z(1) - 36 * Z(2) + 16 * Z(3) - 3 * Z(4)) / (12 * h);
  CHECK(std::abs(fd / z0 - 2 / (pi * R1 * z0)) < 1e-8);
  CHECK(std::abs(annulus_Z_prime(R1, R1, z0) / z0 - 2 / (pi * R1 * z0)) < 1e-12);
  CHECK(std::abs(annulus_Z_prime(R1, R1, z0)) > 1e-3);
  CHECK(std::abs(annulus_Z_prime(R2, R1, z0)) > 1e-3);
}

TEST_CASE("leading eigenpairs") {
  auto ep = leading_eigenpair(Domain::interval(1), BC::Dirichlet);
  CHECK(ep.mu1 == doctest::Approx(pi * pi).epsilon(1e-14));
  auto I = Domain::interval(1);
  for (double x : {0.1, 0.5, 0.77})
    CHECK(ep(make_site(I, {x})) == doctest::Approx(std::sqrt(2) * std::sin(pi * x)).epsilon(1e-13));
  CHECK(leading_eigenpair(Domain::box(3, 1), BC::Dirichlet).mu1 ==
        doctest::Approx(3 * pi * pi).epsilon(1e-13));
  auto b = leading_eigenpair(Domain::ball(2, 1), BC::Dirichlet);
  double z0 = first_bessel_zero(0).z0;
  CHECK(b.mu1 == doctest::Approx(z0 * z0).epsilon(1e-13));
  // C_d from its closed form at d = 2
  double d = 2;
  double Cd = std::pow(2, -d / 2) * d / std::tgamma(1 + d / 2) * std::pow(z0, (d - 2) / 2);
  CHECK(Cd == doctest::Approx(1.0));
  CHECK(ball_plot_constant(2) == doctest::Approx(1.0).epsilon(1e-10));
  auto n = leading_eigenpair(Domain::interval(2), BC::Neumann);
  CHECK(n.mu1 == 0.0);
  CHECK(n(make_site(Domain::interval(2), {0.3})) == doctest::Approx(1 / std::sqrt(2.0)));
  auto p = leading_eigenpair(Domain::product({Domain::interval(1), Domain::ball(2, 1)}),
                             BC::Dirichlet);
  CHECK(p.mu1 == doctest::Approx(pi * pi + z0 * z0));
}

TEST_CASE("eigenfunction normalization and positivity") {
  std::vector<Domain> cat = {Domain::interval(1.5), Domain::ball(2, 1), Domain::ball(3, 1),
                             Domain::annulus(1, 3), Domain::box(2, 1)};
  for (const auto& D : cat) {
    auto ep = leading_eigenpair(D, BC::Dirichlet);
    auto r = integrate_domain(D, 0, [&](const Site& s) {
      double v = ep(s);
      CHECK(v >= 0);
      return v * v;
    });
    CHECK(r.value == doctest::Approx(1.0).epsilon(1e-8));
  }
}

TEST_CASE("spectrum") {
  Spectrum d(Domain::interval(1), BC::Dirichlet, 1);
  REQUIRE(d.size() == 1);
  CHECK(d.mu(0) == doctest::Approx(pi * pi));
  Spectrum n(Domain::interval(1), BC::Neumann, 2);
  CHECK(n.mu(0) == 0.0);
  CHECK(n.eval(0, {0.3}) == doctest::Approx(1.0));
  CHECK(n.mu(1) == doctest::Approx(pi * pi));
  CHECK(n.eval(1, {0.3}) == doctest::Approx(std::sqrt(2) * std::cos(0.3 * pi)));
  Spectrum b(Domain::box(2, 1), BC::Dirichlet, 2);
  CHECK(b.mu(0) == doctest::Approx(2 * pi * pi));
  CHECK(b.mu(1) == doctest::Approx(5 * pi * pi));
  Spectrum big(Domain::box(2, 1), BC::Neumann, 200);
  for (std::size_t i = 1; i < big.size(); ++i) CHECK(big.mu(i) >= big.mu(i - 1));
  CHECK_THROWS(Spectrum(Domain::interval(1), BC::Dirichlet, Spectrum::kMaxModes + 1));
  CHECK_THROWS(Spectrum(Domain::ball(2, 1), BC::Dirichlet, 4));
}

TEST_CASE("orthonormality") {
  for (BC bc : {BC::Dirichlet, BC::Neumann}) {
    Spectrum s(Domain::interval(1), bc, 64);
    const int P = 1 << 12;
    const double h = 1.0 / P;
    std::vector<std::vector<double>> v(s.size(), std::vector<double>(P + 1));
    for (std::size_t i = 0; i < s.size(); ++i)
      for (int j = 0; j <= P; ++j) v[i][j] = s.eval(i, {std::clamp(j * h, 1e-300, 1.0)});
    double worst = 0;
    for (std::size_t a = 0; a < s.size(); ++a)
      for (std::size_t b = a; b < s.size(); ++b) {
        double acc = 0;
        for (int j = 0; j <= P; ++j) {
          double w = (j == 0 || j == P) ? 1 : (j % 2 ? 4 : 2);
          acc += w * v[a][j] * v[b][j];
        }
        acc *= h / 3;
        worst = std::max(worst, std::abs(acc - (a == b ? 1.0 : 0.0)));
      }
    CHECK(worst < 1e-8);
  }
}

TEST_CASE("eigen residual converges at second order") {
  Spectrum s(Domain::interval(1), BC::Dirichlet, 3);
  double x = 0.37;
  std::vector<double> err;
  for (double h : {1e-2, 5e-3}) {
    double d2 = (s.eval(2, {x + h}) - 2 * s.eval(2, {x}) + s.eval(2, {x - h})) / (h * h);
    err.push_back(std::abs(d2 + s.mu(2) * s.eval(2, {x})));
  }
  CHECK(std::log2(err[0] / err[1]) == doctest::Approx(2.0).epsilon(0.05));
}

TEST_CASE("phi1 measure integral") {
  auto I = Domain::interval(1);
  auto ep = leading_eigenpair(I, BC::Dirichlet);
  auto a = phi1_measure_integral(I, ep, InitialMeasure::atom({0.5}));
  CHECK(a.value == doctest::Approx(std::sqrt(2.0)));
  auto f = phi1_measure_integral(I, ep, InitialMeasure::gap_product_power(1.5));
  CHECK(f.finite);
  // ∫ √2 sin(πx) [x(1-x)]^{-1.5} dx by an independent substitution x = sin²θ
  auto g = [](double th) {
    double s = std::sin(th), c = std::cos(th);
    double x = s * s;
    (void)x;
    return std::sqrt(2.0) * std::sin(pi * std::min(s * s, c * c)) * 2 / ((s * c) * (s * c));
  };
  double oracle = quad::simpson_refined(g, 1e-9, pi / 2 - 1e-9, 1e-11);
  CHECK(f.value == doctest::Approx(oracle).epsilon(1e-6));
  auto bad = phi1_measure_integral(I, ep, InitialMeasure::gap_product_power(2.5));
  CHECK_FALSE(bad.finite);
}

TEST_CASE("phi1 against boundary distance") {
  std::vector<Domain> cat = {Domain::interval(1), Domain::ball(2, 1), Domain::annulus(1, 3)};
  for (const auto& D : cat) {
    auto ep = leading_eigenpair(D, BC::Dirichlet);
    double c0 = fit_phi_distance_constant(D, ep, 500);
    CHECK(std::isfinite(c0));
    CHECK(c0 >= 1);
  }
}

TEST_CASE("BesselJMax grid maximum stabilizes") {
  for (double nu : {0.0, 0.5}) {
    double z0 = first_bessel_zero(nu).z0;
    auto gridmax = [&](int n) {
      double m = 0;
      for (int i = 1; i < n; ++i) {
        double r = double(i) / n;
        m = std::max(m, std::pow(r, -nu) * bessel_j(nu, r * z0) / (1 - r));
      }
      return m;
    };
    double a = gridmax(1000), b = gridmax(4000);
    CHECK(std::isfinite(b));
    CHECK(std::abs(a - b) < 1e-3 * b);
  }
}
