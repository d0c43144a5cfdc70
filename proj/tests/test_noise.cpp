#include <doctest.h>

#include <cmath>
#include <random>

#include "spde/error.hpp"
#include "spde/noise.hpp"
#include "spde/quadrature.hpp"
#include "spde/rng.hpp"

using namespace spde;

namespace {

// adaptive Simpson on a smooth integrand
template <class F>
double asimpson(F f, double a, double b, double tol, int depth = 40) {
  auto rec = [&](auto&& self, double a, double b, double fa, double fm, double fb, double whole, double tol,
                 int depth) -> double {
    double m = 0.5 * (a + b), lm = 0.5 * (a + m), rm = 0.5 * (m + b);
    double flm = f(lm), frm = f(rm);
    double left = (m - a) / 6 * (fa + 4 * flm + fm), right = (b - m) / 6 * (fm + 4 * frm + fb);
    if (depth <= 0 || std::abs(left + right - whole) < 15 * tol) return left + right + (left + right - whole) / 15;
    return self(self, a, m, fa, flm, fm, left, tol / 2, depth - 1) +
           self(self, m, b, fm, frm, fb, right, tol / 2, depth - 1);
  };
  double fa = f(a), fb = f(b), fm = f(0.5 * (a + b));
  return rec(rec, a, b, fa, fm, fb, (b - a) / 6 * (fa + 4 * fm + fb), tol, depth);
}

}  // namespace

TEST_CASE("philox known answers") {
  auto z = philox4x32({0, 0, 0, 0}, {0, 0});
  CHECK(z[0] == 0x6627e8d5u);
  CHECK(z[1] == 0xe169c58du);
  CHECK(z[2] == 0xbc57ac4cu);
  CHECK(z[3] == 0x9b00dbd8u);
  auto f = philox4x32({0xffffffffu, 0xffffffffu, 0xffffffffu, 0xffffffffu}, {0xffffffffu, 0xffffffffu});
  CHECK(f[0] == 0x408f276du);
  CHECK(f[1] == 0x41c83b0eu);
  CHECK(f[2] == 0xa20bc7c6u);
  CHECK(f[3] == 0x6d5451fdu);
}

TEST_CASE("normal stream moments and replay") {
  NormalStream a(7, 3, 11), b(7, 3, 11), c(7, 4, 11);
  double s1 = 0, s2 = 0, s4 = 0;
  const int n = 200000;
  bool same = true, differ = false;
  for (int i = 0; i < n; ++i) {
    double x = a.next(), y = b.next(), w = c.next();
    same = same && (x == y);
    differ = differ || (x != w);
    s1 += x;
    s2 += x * x;
    s4 += x * x * x * x;
  }
  CHECK(same);
  CHECK(differ);
  CHECK(std::abs(s1 / n) < 5 / std::sqrt(double(n)));
  CHECK(std::abs(s2 / n - 1) < 5 * std::sqrt(2.0 / n));
  CHECK(std::abs(s4 / n - 3) < 5 * std::sqrt(96.0 / n));
}

TEST_CASE("1d diagonal cell") {
  CHECK(riesz_cell_1d(0.5, 0) == doctest::Approx(8.0 / 3).epsilon(1e-14));
  for (double b : {0.1, 0.3, 0.7, 0.9})
    CHECK(riesz_cell_1d(b, 0) == doctest::Approx(2 / ((1 - b) * (2 - b))).epsilon(1e-13));
}

TEST_CASE("1d adjacent and distant cells against quadrature") {
  for (double b : {0.25, 0.5, 0.75})
    for (long k : {1L, 2L, 5L, 8L, 9L, 20L, 100L}) {
      // inner integral in closed form, outer by adaptive Simpson on a
      // substitution that removes the endpoint singularity for k = 1
      auto inner = [&](double y) {
        // ∫_k^{k+1} |y - y'|^{-β} dy' for y in [0,1]
        double a = k - y, c = k + 1 - y;
        if (a >= 0) return (std::pow(c, 1 - b) - std::pow(a, 1 - b)) / (1 - b);
        return (std::pow(c, 1 - b) + std::pow(-a, 1 - b)) / (1 - b);
      };
      double want = asimpson(inner, 0.0, 1.0, 1e-14);
      CHECK(riesz_cell_1d(b, k) == doctest::Approx(want).epsilon(1e-10));
      CHECK(riesz_cell_1d(b, -k) == riesz_cell_1d(b, k));
    }
}

TEST_CASE("far cells approach the pointwise kernel") {
  const double h = 1e-3, beta = 0.5;
  long k = std::lround(0.5 / h);
  double c = std::pow(h, -beta) * riesz_cell_1d(beta, k);
  CHECK(std::abs(c / std::pow(0.5, -beta) - 1) < 0.01);
  for (long k2 : {0L, 3L}) {
    double c2 = std::pow(h, -1.0) * riesz_cell_2d(1.0, k, k2);
    CHECK(std::abs(c2 / std::pow(std::hypot(k, k2) * h, -1.0) - 1) < 0.01);
  }
}

TEST_CASE("2d cell integrals against nested quadrature") {
  // oracle: the 4-d cell pair integral with the inner cell integrated in
  // polar coordinates about the outer point (constant weight, exact radial
  // part) and the outer point by nested tanh-sinh, which absorbs the edge
  // singularities of the inner integral
  auto corner = [](double beta, double a, double c) {
    // ∫_0^a ∫_0^c (u² + v²)^{-β/2}, a, c > 0, as two polar triangles
    // triangle with leg p, opposite side q: after w = tan θ the radial
    // integral is p^{2-β}/(2-β) ∫_0^{q/p} (1+w²)^{-β/2} dw
    auto tri = [&](double p, double q) {
      double Q = q / p;
      auto g = [&](double w) { return std::pow(1 + w * w, -beta / 2); };
      double s = quad::composite_gl(g, 0.0, std::min(Q, 1.0), 1, 20);
      if (Q > 1) {
        auto ge = [&](double t) { return g(std::exp(t)) * std::exp(t); };
        s += quad::composite_gl(ge, 0.0, std::log(Q), int(std::ceil(std::log(Q))) + 1, 20);
      }
      return std::pow(p, 2 - beta) / (2 - beta) * s;
    };
    return tri(a, c) + tri(c, a);
  };
  auto inner = [&](double beta, double x1, double x2, double k1, double k2) {
    auto F = [&](double a, double c) {
      if (a == 0 || c == 0) return 0.0;
      double sg = (a < 0) == (c < 0) ? 1.0 : -1.0;
      return sg * corner(beta, std::abs(a), std::abs(c));
    };
    double a0 = k1 - x1, a1 = k1 + 1 - x1, c0 = k2 - x2, c1 = k2 + 1 - x2;
    return F(a1, c1) - F(a0, c1) - F(a1, c0) + F(a0, c0);
  };
  CHECK(riesz_cell_2d(1.0, 0, 0) ==
        doctest::Approx(4 * std::log(1 + std::sqrt(2.0)) - 4.0 / 3 * (std::sqrt(2.0) - 1)).epsilon(1e-13));
  for (double beta : {0.5, 1.5})
    for (auto [k1, k2] : std::vector<std::pair<long, long>>{{0, 0}, {1, 0}, {1, 1}, {2, 1}}) {
      auto outer = [&](double x1, double, double) {
        auto in2 = [&](double x2, double, double) { return inner(beta, x1, x2, double(k1), double(k2)); };
        return quad::tanh_sinh(in2, 0.0, 1.0, 1e-11).value;
      };
      double want = quad::tanh_sinh(outer, 0.0, 1.0, 1e-11).value;
      INFO("beta=" << beta << " k=(" << k1 << "," << k2 << ")");
      CHECK(riesz_cell_2d(beta, k1, k2) == doctest::Approx(want).epsilon(1e-9));
      CHECK(riesz_cell_2d(beta, k2, -k1) == riesz_cell_2d(beta, k1, k2));
    }
}

TEST_CASE("covariance structure on interval grids") {
  auto g = interval_grid(64, 1.0);
  auto C = build_covariance(g, 0.5);
  for (int i = 0; i < 64; ++i)
    for (int j = 0; j < 64; ++j) {
      CHECK(C(i, j) == C(j, i));
      if (i > 0 && j > 0) CHECK(C(i, j) == C(i - 1, j - 1));
    }
  CHECK(C(0, 0) == doctest::Approx(std::pow(64.0, 0.5) * 8 / 3).epsilon(1e-13));
  CHECK_THROWS_AS(build_covariance(g, 1.0), ValidationError);
  CHECK_THROWS_AS(build_covariance(g, 0.0), ValidationError);
  CHECK_THROWS_AS(build_covariance(square_grid(4, 1.0), 2.0), ValidationError);
}

TEST_CASE("covariance positive semidefinite up to n = 256") {
  for (double beta : {0.25, 0.5, 0.9})
    for (int n : {16, 64, 256}) {
      auto C = build_covariance(interval_grid(n, 1.0), beta);
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(C, Eigen::EigenvaluesOnly);
      CHECK(es.eigenvalues().minCoeff() >= -1e-10 * es.eigenvalues().maxCoeff());
    }
  for (double beta : {0.5, 1.5}) {
    auto C = build_covariance(square_grid(12, 1.0), beta);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(C, Eigen::EigenvaluesOnly);
    CHECK(es.eigenvalues().minCoeff() >= -1e-10 * es.eigenvalues().maxCoeff());
  }
}

TEST_CASE("block averaging reproduces the coarse covariance") {
  for (double beta : {0.3, 0.5, 0.8}) {
    auto F = build_covariance(interval_grid(128, 1.0), beta);
    auto C = build_covariance(interval_grid(64, 1.0), beta);
    double err = 0;
    for (int i = 0; i < 64; ++i)
      for (int j = 0; j < 64; ++j) {
        double avg = 0.25 * (F(2 * i, 2 * j) + F(2 * i + 1, 2 * j) + F(2 * i, 2 * j + 1) + F(2 * i + 1, 2 * j + 1));
        err = std::max(err, std::abs(avg - C(i, j)) / std::max(1.0, std::abs(C(i, j))));
      }
    CHECK(err < 1e-10);
  }
  auto F = build_covariance(square_grid(8, 1.0), 1.0);
  auto C = build_covariance(square_grid(4, 1.0), 1.0);
  double err = 0;
  for (int i = 0; i < 16; ++i)
    for (int j = 0; j < 16; ++j) {
      int i1 = i % 4, i2 = i / 4, j1 = j % 4, j2 = j / 4;
      double avg = 0;
      for (int a = 0; a < 4; ++a)
        for (int b = 0; b < 4; ++b) {
          int fi = (2 * i1 + a % 2) + 8 * (2 * i2 + a / 2), fj = (2 * j1 + b % 2) + 8 * (2 * j2 + b / 2);
          avg += F(fi, fj) / 16;
        }
      err = std::max(err, std::abs(avg - C(i, j)) / C(i, j));
    }
  CHECK(err < 1e-7);
}

TEST_CASE("factorize examples") {
  auto I = factorize(Eigen::MatrixXd::Identity(5, 5));
  CHECK((I.factor - Eigen::MatrixXd::Identity(5, 5)).cwiseAbs().maxCoeff() == 0.0);
  double r = 0.3;
  Eigen::Matrix2d M;
  M << 1, r, r, 1;
  auto f = factorize(M);
  CHECK(f.factor(0, 0) == doctest::Approx(1));
  CHECK(f.factor(0, 1) == 0.0);
  CHECK(f.factor(1, 0) == doctest::Approx(r));
  CHECK(f.factor(1, 1) == doctest::Approx(std::sqrt(1 - r * r)));
  auto g = factorize(build_covariance(interval_grid(64, 1.0), 0.5));
  CHECK(g.reconstruction_error < 1e-8);
  CHECK((g.factor * g.factor.transpose() - g.cov).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("factorize falls back on singular input and rejects indefinite") {
  Eigen::Matrix3d S;
  S << 1, 1, 0, 1, 1, 0, 0, 0, 2;
  auto f = factorize(S);
  CHECK(f.eigen_fallback);
  CHECK(f.reconstruction_error < 1e-12);
  CHECK(f.factor.triangularView<Eigen::StrictlyUpper>().toDenseMatrix().cwiseAbs().maxCoeff() == 0.0);
  Eigen::Matrix2d B;
  B << 1, 2, 2, 1;
  CHECK_THROWS_AS(factorize(B), NumericalError);
  Eigen::Matrix2d A;
  A << 1, 2, 0, 1;
  CHECK_THROWS_AS(factorize(A), ValidationError);
}

TEST_CASE("sampled increments") {
  auto g = interval_grid(8, 1.0);
  auto f = factorize(build_covariance(g, 0.5));
  CHECK(sample_increment(f, 0.0, 1, 2, 3).cwiseAbs().maxCoeff() == 0.0);
  auto a = sample_increment(f, 0.01, 42, 5, 9), b = sample_increment(f, 0.01, 42, 5, 9);
  CHECK((a - b).cwiseAbs().maxCoeff() == 0.0);
  CHECK((a - sample_increment(f, 0.01, 43, 5, 9)).cwiseAbs().maxCoeff() > 0);

  const int M = 100000;
  const double dt = 0.01;
  Eigen::MatrixXd S = Eigen::MatrixXd::Zero(8, 8), S4 = S;
  Eigen::MatrixXd X(8, M), Y(8, M);
  for (int m = 0; m < M; ++m) {
    X.col(m) = sample_increment(f, dt, 1234, m, 0);
    Y.col(m) = sample_increment(f, dt, 1234, m, 1);
  }
  S = X * X.transpose() / M;
  S4 = (X.cwiseProduct(X)) * (X.cwiseProduct(X)).transpose() / M;
  int bad = 0;
  for (int i = 0; i < 8; ++i)
    for (int j = 0; j < 8; ++j) {
      // standard error of the sample mean of x_i x_j
      double want = dt * f.cov(i, j);
      double var = dt * dt * (f.cov(i, i) * f.cov(j, j) + f.cov(i, j) * f.cov(i, j));
      if (std::abs(S(i, j) - want) > 5 * std::sqrt(var / M)) ++bad;
    }
  CHECK(bad == 0);
  // disjoint steps: sample correlation across steps
  double worst = 0;
  for (int i = 0; i < 8; ++i)
    for (int j = 0; j < 8; ++j) {
      double c = X.row(i).dot(Y.row(j)) / std::sqrt(X.row(i).squaredNorm() * Y.row(j).squaredNorm());
      worst = std::max(worst, std::abs(c));
    }
  CHECK(worst < 5 / std::sqrt(double(M)));
}
