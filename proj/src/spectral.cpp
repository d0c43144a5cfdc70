#include "spde/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numbers>
#include <random>

#include "spde/error.hpp"

namespace spde {

namespace {
constexpr double kPi = std::numbers::pi;
}

std::string to_string(BC bc) { return bc == BC::Dirichlet ? "dirichlet" : "neumann"; }

BC parse_bc(const std::string& s) {
  if (s == "dirichlet" || s == "Dirichlet") return BC::Dirichlet;
  if (s == "neumann" || s == "Neumann") return BC::Neumann;
  throw ValidationError("unknown boundary condition '" + s + "' (expected dirichlet|neumann)");
}

double bessel_j(double nu, double x) {
  if (!(x >= 0)) throw ValidationError("bessel_j: x must be >= 0");
  require(nu >= -1, "bessel_j: order must be >= -1");
  if (nu >= 0) return std::cyl_bessel_j(nu, x);
  if (nu == -1) return -std::cyl_bessel_j(1.0, x);
  if (x == 0) return INFINITY;
  double m = -nu;
  return std::cos(m * kPi) * std::cyl_bessel_j(m, x) - std::sin(m * kPi) * std::cyl_neumann(m, x);
}

double bessel_y(int nu, double x) {
  require(nu == 0 || nu == 1, "bessel_y: order must be 0 or 1");
  if (!(x > 0)) throw ValidationError("bessel_y: x must be > 0");
  return std::cyl_neumann(double(nu), x);
}

namespace {

double bessel_j_prime(double nu, double x) {
  // J_nu' = J_{nu-1} - (nu/x) J_nu; at x > 0.
  return bessel_j(nu - 1, x) - nu / x * bessel_j(nu, x);
}

template <class F>
double bisect(F f, double a, double b) {
  double fa = f(a);
  for (int i = 0; i < 200; ++i) {
    double m = 0.5 * (a + b);
    if (m <= a || m >= b) break;
    double fm = f(m);
    if (fm == 0) return m;
    if ((fm < 0) == (fa < 0)) {
      a = m;
      fa = fm;
    } else {
      b = m;
    }
  }
  double fa2 = std::abs(f(a)), fb2 = std::abs(f(b));
  return fa2 <= fb2 ? a : b;
}

}  // namespace

BesselZero first_bessel_zero(double nu) {
  require(nu >= 0, "first_bessel_zero: order must be >= 0");
  auto f = [nu](double x) { return bessel_j(nu, x); };
  const double step = kPi / 4;
  double a = step, fa = f(a);
  for (int k = 2; k < 400; ++k) {
    double b = k * step, fb = f(b);
    if ((fa > 0) != (fb > 0) || fb == 0) {
      double z = bisect(f, a, b);
      double dz = bessel_j_prime(nu, z);
      if (!(std::abs(dz) > 0)) throw NumericalError("first_bessel_zero: zero is not simple");
      return {z, dz};
    }
    a = b;
    fa = fb;
  }
  throw NumericalError("first_bessel_zero: bracketing failed");
}

double cross_product_zero(double R1, double R2) {
  require(R1 > 0 && R2 > R1, "cross_product_zero: need 0 < R1 < R2");
  auto F = [R1, R2](double z) {
    return bessel_j(0, R1 * z) * bessel_y(0, R2 * z) - bessel_y(0, R1 * z) * bessel_j(0, R2 * z);
  };
  // Zeros in z are spaced by about pi/(R2 - R1); scan on a quarter of that.
  const double step = kPi / 4 / (R2 - R1);
  double a = step * 0.25, fa = F(a);
  for (int k = 1; k < 100000; ++k) {
    double b = a + step, fb = F(b);
    if ((fa > 0) != (fb > 0) || fb == 0) return bisect(F, a, b);
    a = b;
    fa = fb;
  }
  throw NumericalError("cross_product_zero: bracketing failed");
}

double annulus_Z(double r, double R1, double R2, double z0) {
  require(r >= R1 * (1 - 1e-12) && r <= R2 * (1 + 1e-12), "annulus_Z: r outside [R1, R2]");
  return bessel_j(0, R1 * z0) * bessel_y(0, r * z0) - bessel_y(0, R1 * z0) * bessel_j(0, r * z0);
}

double annulus_Z_prime(double r, double R1, double z0) {
  // d/dr with J0' = -J1, Y0' = -Y1.
  return z0 * (-bessel_j(0, R1 * z0) * bessel_y(1, r * z0) + bessel_y(0, R1 * z0) * bessel_j(1, r * z0));
}

Site EigenPair::factor_site(const Site& s, std::size_t k) const {
  const int xo = x_offsets[k], go = gap_offsets[k];
  const int xn = factors[k].dim;
  const int gn = (k + 1 < gap_offsets.size() ? gap_offsets[k + 1] : int(s.lo.size())) - go;
  Site f;
  f.x.assign(s.x.begin() + xo, s.x.begin() + xo + xn);
  f.lo.assign(s.lo.begin() + go, s.lo.begin() + go + gn);
  f.hi.assign(s.hi.begin() + go, s.hi.begin() + go + gn);
  return f;
}

namespace {

EigenPair interval_pair(double L, BC bc) {
  EigenPair e;
  e.bc = bc;
  e.dim = 1;
  if (bc == BC::Neumann) {
    double c = 1 / std::sqrt(L);
    e.mu1 = 0;
    e.phi1 = [c](const Site&) { return c; };
  } else {
    double c = std::sqrt(2 / L);
    e.mu1 = kPi * kPi / (L * L);
    e.phi1 = [c, L](const Site& s) { return c * std::sin(kPi * std::min(s.lo[0], s.hi[0]) / L); };
  }
  auto sq = [&](double x) {
    Site s{{x}, {x}, {L - x}};
    double v = e.phi1(s);
    return v * v;
  };
  e.norm = std::sqrt(quad::simpson_refined(sq, 0, L, 1e-12));
  return e;
}

EigenPair product_of(std::vector<EigenPair> fs, const std::vector<int>& slots, BC bc) {
  EigenPair e;
  e.bc = bc;
  e.dim = 0;
  e.mu1 = 0;
  e.norm = 1;
  int go = 0;
  for (std::size_t k = 0; k < fs.size(); ++k) {
    e.x_offsets.push_back(e.dim);
    e.gap_offsets.push_back(go);
    e.dim += fs[k].dim;
    go += slots[k];
    e.mu1 += fs[k].mu1;
    e.norm *= fs[k].norm;
  }
  e.factors = std::move(fs);
  // The closure reads factors through a shared copy so the pair stays copyable.
  auto shared = std::make_shared<EigenPair>(e);
  e.phi1 = [shared](const Site& s) {
    double p = 1;
    for (std::size_t k = 0; k < shared->factors.size(); ++k)
      p *= shared->factors[k].phi1(shared->factor_site(s, k));
    return p;
  };
  return e;
}

double radial_simpson(const std::function<double(double)>& f, double a, double b) {
  return quad::simpson_refined(f, a, b, 1e-8 * 1e-3, 64);
}

EigenPair ball_pair(int d, double R) {
  EigenPair e;
  e.bc = BC::Dirichlet;
  e.dim = d;
  if (d == 1) {
    // (-R, R): cos(pi r / (2R)) / sqrt(R).
    double c = 1 / std::sqrt(R);
    e.mu1 = kPi * kPi / (4 * R * R);
    e.phi1 = [c, R](const Site& s) { return c * std::sin(kPi * s.hi[0] / (2 * R)); };
    e.norm = 1;
    return e;
  }
  const double nu = (d - 2) / 2.0;
  const BesselZero bz = first_bessel_zero(nu);
  const double z0 = bz.z0, k = z0 / R;
  e.mu1 = k * k;
  // g(r) = r^{-nu} J_nu(k r)
  const double vR = k * bz.derivative;  // (J_nu(k r))' at R
  const double g1 = std::pow(R, -nu) * vR;
  const double g2 = -(2 * nu + 1) * std::pow(R, -nu - 1) * vR;
  const double g0lim = std::pow(k / 2, nu) / std::tgamma(nu + 1);
  auto g = [=](double r, double gap) {
    if (gap < 1e-5 * R) return -g1 * gap + 0.5 * g2 * gap * gap;
    if (r < 1e-6 * R) return g0lim * (1 - (k * r) * (k * r) / (4 * (nu + 1)));
    return std::pow(r, -nu) * bessel_j(nu, k * r);
  };
  const double area = 2 * std::pow(kPi, d / 2.0) / std::tgamma(d / 2.0);
  double I = area * radial_simpson([&](double r) {
               double j = bessel_j(nu, k * r);
               return r * j * j;
             }, 0, R);
  double c = 1 / std::sqrt(I);
  e.phi1 = [c, g](const Site& s) { return c * g(s.lo[0], s.hi[0]); };
  e.norm = std::sqrt(area * radial_simpson([&](double r) {
                       double v = c * g(r, R - r);
                       return std::pow(r, d - 1) * v * v;
                     }, 0, R));
  return e;
}

EigenPair annulus_pair(double R1, double R2) {
  EigenPair e;
  e.bc = BC::Dirichlet;
  e.dim = 2;
  const double z0 = cross_product_zero(R1, R2);
  e.mu1 = z0 * z0;
  double sgn = annulus_Z(0.5 * (R1 + R2), R1, R2, z0) > 0 ? 1.0 : -1.0;
  const double d1 = sgn * annulus_Z_prime(R1, R1, z0), d2 = sgn * annulus_Z_prime(R2, R1, z0);
  const double s1 = -d1 / R1, s2 = -d2 / R2;  // second derivatives at the walls
  auto Z = [=](double lo, double hi) {
    double w = R2 - R1;
    if (lo < 1e-5 * w) return d1 * lo + 0.5 * s1 * lo * lo;
    if (hi < 1e-5 * w) return -d2 * hi + 0.5 * s2 * hi * hi;
    return sgn * annulus_Z(R1 + lo, R1, R2, z0);
  };
  double I = 2 * kPi * radial_simpson([&](double r) {
               double v = Z(r - R1, R2 - r);
               return r * v * v;
             }, R1, R2);
  double c = 1 / std::sqrt(I);
  e.phi1 = [c, Z](const Site& s) { return c * Z(s.lo[0], s.hi[0]); };
  e.norm = 1;
  e.norm = std::sqrt(2 * kPi * radial_simpson([&](double r) {
                       double v = c * Z(r - R1, R2 - r);
                       return r * v * v;
                     }, R1, R2));
  return e;
}

}  // namespace

EigenPair leading_eigenpair(const Domain& D, BC bc) {
  using K = Domain::Kind;
  if (bc == BC::Neumann) {
    if (D.kind() == K::Interval) return interval_pair(D.length(), bc);
    if (D.kind() == K::Box || D.kind() == K::Product) {
      std::vector<EigenPair> fs;
      std::vector<int> slots;
      if (D.kind() == K::Box) {
        for (int i = 0; i < D.dim(); ++i) {
          fs.push_back(interval_pair(D.length(), bc));
          slots.push_back(1);
        }
      } else {
        for (const auto& f : D.factors()) {
          fs.push_back(leading_eigenpair(f, bc));
          slots.push_back(gap_slots(f));
        }
      }
      return product_of(std::move(fs), slots, bc);
    }
    EigenPair e;
    e.bc = bc;
    e.dim = D.dim();
    e.mu1 = 0;
    double c = 1 / std::sqrt(D.volume());
    e.phi1 = [c](const Site&) { return c; };
    e.norm = 1;
    return e;
  }
  switch (D.kind()) {
    case K::Interval: return interval_pair(D.length(), bc);
    case K::Box: {
      std::vector<EigenPair> fs(D.dim(), interval_pair(D.length(), bc));
      return product_of(std::move(fs), std::vector<int>(D.dim(), 1), bc);
    }
    case K::Ball: return ball_pair(D.dim(), D.radius());
    case K::Annulus: return annulus_pair(D.inner_radius(), D.outer_radius());
    case K::Product: {
      std::vector<EigenPair> fs;
      std::vector<int> slots;
      for (const auto& f : D.factors()) {
        fs.push_back(leading_eigenpair(f, bc));
        slots.push_back(gap_slots(f));
      }
      return product_of(std::move(fs), slots, bc);
    }
  }
  throw ValidationError("leading_eigenpair: unsupported domain");
}

double ball_plot_constant(int d) {
  require(d >= 2, "ball_plot_constant: d must be >= 2");
  double z0 = first_bessel_zero((d - 2) / 2.0).z0;
  return std::pow(2.0, -d / 2.0) * d / std::tgamma(1 + d / 2.0) * std::pow(z0, (d - 2) / 2.0);
}

double Spectrum::mode1d(BC bc, int k, double L, double x) {
  if (bc == BC::Dirichlet) return std::sqrt(2 / L) * std::sin(k * kPi * x / L);
  if (k == 0) return 1 / std::sqrt(L);
  return std::sqrt(2 / L) * std::cos(k * kPi * x / L);
}

Spectrum::Spectrum(const Domain& D, BC bc, int N) : bc_(bc) {
  require(N >= 1, "full_spectrum: N must be >= 1");
  require(N <= kMaxModes, "full_spectrum: N exceeds the cap of 65536 modes");
  require(D.kind() == Domain::Kind::Interval || D.kind() == Domain::Kind::Box,
          "full_spectrum: only Interval and Box are supported");
  L_ = D.length();
  d_ = D.dim();
  const int k0 = bc == BC::Dirichlet ? 1 : 0;
  const double w = kPi / L_;
  if (d_ == 1) {
    for (int k = k0; k < k0 + N; ++k) modes_.push_back({w * w * k * k, {k}});
    return;
  }
  int K = int(std::ceil(std::pow(4.0 * N, 1.0 / d_))) + 2;
  while (true) {
    std::vector<Mode> all;
    std::vector<int> idx(d_, k0);
    while (true) {
      long s = 0;
      for (int v : idx) s += long(v) * v;
      all.push_back({w * w * double(s), idx});
      int a = 0;
      while (a < d_ && ++idx[a] > K) idx[a++] = k0;
      if (a == d_) break;
    }
    if (long(all.size()) >= N) {
      std::stable_sort(all.begin(), all.end(), [](const Mode& a, const Mode& b) {
        if (a.mu != b.mu) return a.mu < b.mu;
        return a.k < b.k;
      });
      // Anything outside the cube has some index > K.
      double bound = w * w * (double(K + 1) * (K + 1) + (d_ - 1) * double(k0) * k0);
      if (all[N - 1].mu < bound) {
        all.resize(N);
        modes_ = std::move(all);
        return;
      }
    }
    K *= 2;
  }
}

double Spectrum::eval(std::size_t i, const Point& x) const {
  double p = 1;
  for (int a = 0; a < d_; ++a) p *= mode1d(bc_, modes_[i].k[a], L_, x[a]);
  return p;
}

Spectrum full_spectrum(const Domain& D, BC bc, int N) { return Spectrum(D, bc, N); }

QuadValue phi1_measure_integral(const Domain& D, const EigenPair& ep, const InitialMeasure& nu) {
  nu.check_support(D);
  return integrate_abs_measure(D, nu, 0.0, ep.phi1);
}

double fit_phi_distance_constant(const Domain& D, const EigenPair& ep, int samples) {
  std::mt19937_64 rng(12345);
  Point lo = D.lower_corner(), hi = D.upper_corner();
  double rmin = INFINITY, rmax = 0;
  int got = 0;
  auto consider = [&](const Point& p) {
    if (!D.contains(p)) return;
    Site s = make_site(D, p);
    double dist = site_min_gap(s);
    if (!(dist > 0)) return;
    double r = ep.phi1(s) / dist;
    rmin = std::min(rmin, r);
    rmax = std::max(rmax, r);
    ++got;
  };
  std::uniform_real_distribution<double> U(0, 1);
  for (int i = 0; got < samples && i < 100 * samples; ++i) {
    Point p(D.dim());
    for (int a = 0; a < D.dim(); ++a) p[a] = lo[a] + (hi[a] - lo[a]) * U(rng);
    consider(p);
    // Push a copy toward the boundary along the first axis.
    Point q = p;
    double t = std::pow(10.0, -1 - 8 * U(rng));
    q[0] = hi[0] - t * (hi[0] - lo[0]);
    for (int k = 0; k < 60 && !D.contains(q); ++k) q[0] = 0.5 * (q[0] + p[0]);
    consider(q);
  }
  require(got > 0 && rmin > 0, "fit_phi_distance_constant: no usable samples");
  return std::max({1.0, rmax, 1 / rmin});
}

}  // namespace spde
