#include "spde/heatkernel.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "spde/error.hpp"

namespace spde {

namespace {

constexpr double kPi = std::numbers::pi;

// p(v - g) - p(v + g) without the (4πt)^{-1/2} prefactor, stable for small g.
double gauss_diff(double v, double g, double t) {
  if (v >= 0) return -std::exp(-(v - g) * (v - g) / (4 * t)) * std::expm1(-v * g / t);
  return std::exp(-(v + g) * (v + g) / (4 * t)) * std::expm1(v * g / t);
}

// erf(u1) - erf(u2) without cancellation in the tails.
double erf_diff(double u1, double u2) {
  if (u1 > 0 && u2 > 0) return std::erfc(u2) - std::erfc(u1);
  if (u1 < 0 && u2 < 0) return std::erfc(-u1) - std::erfc(-u2);
  return std::erf(u1) - std::erf(u2);
}

int image_count(double t, double L) { return int(std::ceil(std::sqrt(4 * t * 40.0) / (2 * L))) + 2; }

}  // namespace

HeatKernel::HeatKernel(const Domain& D, BC bc, int modes, double t_switch)
    : domain_(D), bc_(bc), N_(modes) {
  require(D.kind() == Domain::Kind::Interval || D.kind() == Domain::Kind::Box,
          "HeatKernel: exact evaluation needs an Interval or Box domain, got " + D.name());
  require(modes >= 1, "HeatKernel: modes must be >= 1");
  L_ = D.length();
  t_switch_ = t_switch > 0 ? t_switch : 0.05 * L_ * L_;
}

double HeatKernel::g1_images(double t, double x, double ylo, double yhi) const {
  const double L = L_;
  const int nmax = image_count(t, L);
  const double pref = 1 / std::sqrt(4 * kPi * t);
  quad::KahanSum s;
  if (bc_ == BC::Dirichlet) {
    if (ylo <= yhi) {
      for (int n = -nmax; n <= nmax; ++n) s.add(gauss_diff(x + 2 * n * L, ylo, t));
    } else {
      for (int n = -nmax; n <= nmax; ++n) s.add(-gauss_diff(x - L + 2 * n * L, yhi, t));
    }
  } else {
    double y = ylo <= yhi ? ylo : L - yhi;
    for (int n = -nmax; n <= nmax; ++n) {
      double a = x - y + 2 * n * L, b = x + y + 2 * n * L;
      s.add(std::exp(-a * a / (4 * t)) + std::exp(-b * b / (4 * t)));
    }
  }
  return pref * s.value();
}

double HeatKernel::g1_eigen(double t, double x, double ylo, double yhi) const {
  const double L = L_, w = kPi / L;
  quad::KahanSum s;
  if (bc_ == BC::Dirichlet) {
    for (int k = 1; k <= N_; ++k) {
      double e = std::exp(-w * w * k * k * t);
      if (std::exp(-w * w * (k * k - 1.0) * t) < 1e-18) break;
      double sy = ylo <= yhi ? std::sin(k * w * ylo) : ((k % 2) ? 1 : -1) * std::sin(k * w * yhi);
      s.add(e * std::sin(k * w * x) * sy);
    }
    return 2 / L * s.value();
  }
  double y = ylo <= yhi ? ylo : L - yhi;
  s.add(0.5);
  for (int k = 1; k < N_; ++k) {
    double e = std::exp(-w * w * k * k * t);
    if (e < 1e-18) break;
    s.add(e * std::cos(k * w * x) * std::cos(k * w * y));
  }
  return 2 / L * s.value();
}

double HeatKernel::g1(double t, double x, double ylo, double yhi) const {
  if (!(t > 0)) throw ValidationError("heat kernel: t must be positive");
  return t >= t_switch_ ? g1_eigen(t, x, ylo, yhi) : g1_images(t, x, ylo, yhi);
}

double HeatKernel::eval_site(double t, const Point& x, const Site& y) const {
  double p = 1;
  for (int a = 0; a < domain_.dim(); ++a) p *= g1(t, x[a], y.lo[a], y.hi[a]);
  return p;
}

double HeatKernel::operator()(double t, const Point& x, const Point& y) const {
  require(domain_.contains(x) && domain_.contains(y), "heat kernel: points must lie in the domain");
  return eval_site(t, x, make_site(domain_, y));
}

double HeatKernel::cell_integral_1d(double t, double x, double a, double b) const {
  require(t > 0, "cell_integral_1d: t must be positive");
  const double L = L_;
  if (t >= t_switch_) {
    const double w = kPi / L;
    quad::KahanSum s;
    if (bc_ == BC::Dirichlet) {
      for (int k = 1; k <= N_; ++k) {
        double e = std::exp(-w * w * k * k * t);
        if (std::exp(-w * w * (k * k - 1.0) * t) < 1e-18) break;
        s.add(e * std::sin(k * w * x) * (std::cos(k * w * a) - std::cos(k * w * b)) / (k * w));
      }
      return 2 / L * s.value();
    }
    s.add((b - a) / 2);
    for (int k = 1; k < N_; ++k) {
      double e = std::exp(-w * w * k * k * t);
      if (e < 1e-18) break;
      s.add(e * std::cos(k * w * x) * (std::sin(k * w * b) - std::sin(k * w * a)) / (k * w));
    }
    return 2 / L * s.value();
  }
  const int nmax = image_count(t, L);
  const double r = 1 / std::sqrt(4 * t);
  quad::KahanSum s;
  const double sgn = bc_ == BC::Dirichlet ? -1.0 : 1.0;
  for (int n = -nmax; n <= nmax; ++n) {
    double sh = 2 * n * L;
    s.add(erf_diff((x - a + sh) * r, (x - b + sh) * r));
    s.add(sgn * erf_diff((x + b + sh) * r, (x + a + sh) * r));
  }
  return 0.5 * s.value();
}

double envelope_eval(const BoundEnvelope& env, const EigenPair& ep, double t, const Site& x,
                     const Site& y) {
  require(t > 0, "envelope_eval: t must be positive");
  const int d = ep.dim;
  double r2 = 0;
  for (int i = 0; i < d; ++i) r2 += (x.x[i] - y.x[i]) * (x.x[i] - y.x[i]);
  double v = env.C * std::exp(-env.mu * t) / std::min(1.0, std::pow(t, d / 2.0)) *
             std::exp(-env.c * r2 / t);
  if (ep.bc == BC::Dirichlet) {
    double s = std::min(1.0, std::pow(t, env.a / 2));
    v *= std::min(1.0, ep.phi1(x) / s) * std::min(1.0, ep.phi1(y) / s);
  }
  return v;
}

EnvelopeFit fit_envelope(const HeatKernel& hk, const EigenPair& ep, const std::vector<double>& ts,
                         const std::vector<Point>& xs, BoundEnvelope::Side side, double a) {
  const Domain& D = hk.domain();
  BoundEnvelope base;
  base.C = 1;
  base.c = 0;
  base.a = a;
  base.mu = ep.mu1;
  base.side = side;
  struct S {
    double z, q, g;
    Site x, y;
    double t;
  };
  std::vector<S> rows;
  for (double t : ts)
    for (const auto& x : xs)
      for (const auto& y : xs) {
        Site sx = make_site(D, x), sy = make_site(D, y);
        double g = hk.eval_site(t, x, sy);
        double shape = envelope_eval(base, ep, t, sx, sy);
        if (!(g > 1e-250) || !(shape > 0)) continue;
        double r2 = 0;
        for (int i = 0; i < D.dim(); ++i) r2 += (x[i] - y[i]) * (x[i] - y[i]);
        rows.push_back({std::log(g / shape), r2 / t, g, sx, sy, t});
      }
  require(rows.size() >= 3, "fit_envelope: not enough positive samples");
  // Least squares z = logC - c q.
  double n = rows.size(), sq = 0, sz = 0, sqq = 0, sqz = 0;
  for (const auto& r : rows) {
    sq += r.q;
    sz += r.z;
    sqq += r.q * r.q;
    sqz += r.q * r.z;
  }
  double den = n * sqq - sq * sq;
  double slope = den > 0 ? (n * sqz - sq * sz) / den : 0.0;
  double c = std::max(-slope, 1e-6);
  double logC = (sz + c * sq) / n;
  EnvelopeFit out;
  out.env = base;
  out.env.c = c;
  out.env.C = std::exp(logC);
  double lo = INFINITY, hi = 0;
  for (const auto& r : rows) {
    double ratio = r.g / envelope_eval(out.env, ep, r.t, r.x, r.y);
    lo = std::min(lo, ratio);
    hi = std::max(hi, ratio);
  }
  out.kappa = std::max(hi, 1 / lo);
  out.env.C *= side == BoundEnvelope::Side::Upper ? hi : lo;
  return out;
}

QuadValue homogeneous_solution(const HeatKernel& hk, const InitialMeasure& nu, double t,
                               const Point& x, double rel_tol) {
  const Domain& D = hk.domain();
  require(D.contains(x), "homogeneous_solution: x outside the domain");
  nu.check_support(D);
  QuadValue out;
  quad::KahanSum s;
  for (const auto& a : nu.atoms()) s.add(a.mass * hk(t, x, a.y0));
  if (!nu.densities().empty()) {
    auto r = integrate_domain(
        D, 0.0, [&](const Site& y) { return nu.density_at(y) * hk.eval_site(t, x, y); }, rel_tol, &x);
    if (r.divergent) return {INFINITY, false};
    s.add(r.value);
  }
  out.value = s.value();
  return out;
}

QuadValue J_c(const Domain& D, const InitialMeasure& nu, double c, double t, const Point& x,
              double eps, double rel_tol) {
  require(c > 0 && t > 0, "J_c: c and t must be positive");
  nu.check_support(D);
  const double pre = 1 / std::min(1.0, std::pow(t, D.dim() / 2.0));
  auto w = [&](const Site& y) {
    double r2 = 0;
    for (int i = 0; i < D.dim(); ++i) r2 += (x[i] - y.x[i]) * (x[i] - y.x[i]);
    return pre * std::exp(-c * r2 / t);
  };
  return integrate_abs_measure(D, nu, eps, w, rel_tol, &x);
}

double Psi(const EigenPair& ep, double t, const Site& x) {
  return std::min(1.0, ep.phi1(x) / std::min(1.0, std::sqrt(t)));
}

double Psi_star(const EigenPair& ep, double t, const Site& x) {
  if (ep.factors.empty()) return Psi(ep, t, x);
  double p = 1;
  for (std::size_t k = 0; k < ep.factors.size(); ++k) p *= Psi_star(ep.factors[k], t, ep.factor_site(x, k));
  return p;
}

QuadValue J_c_star(const Domain& D, const EigenPair& ep, const InitialMeasure& nu, double c,
                   double t, const Point& x, double rel_tol) {
  require(c > 0 && t > 0, "J_c_star: c and t must be positive");
  nu.check_support(D);
  const double pre = 1 / std::min(1.0, std::pow(t, D.dim() / 2.0));
  auto w = [&](const Site& y) {
    double r2 = 0;
    for (int i = 0; i < D.dim(); ++i) r2 += (x[i] - y.x[i]) * (x[i] - y.x[i]);
    return Psi_star(ep, t, y) * pre * std::exp(-c * r2 / t);
  };
  return integrate_abs_measure(D, nu, 0.0, w, rel_tol, &x);
}

}  // namespace spde
