#include "spde/measure.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <locale>
#include <sstream>

#include "spde/error.hpp"

namespace spde {

namespace {

std::string label(const char* name, std::initializer_list<double> args) {
  std::ostringstream o;
  o.imbue(std::locale::classic());
  o.precision(17);
  o << name << "(";
  const char* sep = "";
  for (double a : args) {
    o << sep << a;
    sep = ",";
  }
  o << ")";
  return o.str();
}

double norm2(const double* x, int d) {
  double s = 0;
  for (int i = 0; i < d; ++i) s += x[i] * x[i];
  return std::sqrt(s);
}

void fill_site(const Domain& D, const double* x, double* lo, double* hi) {
  switch (D.kind()) {
    case Domain::Kind::Interval:
    case Domain::Kind::Box:
      for (int i = 0; i < D.dim(); ++i) {
        lo[i] = x[i];
        hi[i] = D.length() - x[i];
      }
      return;
    case Domain::Kind::Ball: {
      double r = norm2(x, D.dim());
      lo[0] = r;
      hi[0] = D.radius() - r;
      return;
    }
    case Domain::Kind::Annulus: {
      double r = norm2(x, 2);
      lo[0] = r - D.inner_radius();
      hi[0] = D.outer_radius() - r;
      return;
    }
    case Domain::Kind::Product: {
      int xo = 0, go = 0;
      for (const auto& f : D.factors()) {
        fill_site(f, x + xo, lo + go, hi + go);
        xo += f.dim();
        go += gap_slots(f);
      }
      return;
    }
  }
}

}  // namespace

int gap_slots(const Domain& D) {
  switch (D.kind()) {
    case Domain::Kind::Interval:
    case Domain::Kind::Box: return D.dim();
    case Domain::Kind::Ball:
    case Domain::Kind::Annulus: return 1;
    case Domain::Kind::Product: {
      int s = 0;
      for (const auto& f : D.factors()) s += gap_slots(f);
      return s;
    }
  }
  return 0;
}

Site make_site(const Domain& D, const Point& x) {
  require(int(x.size()) == D.dim(), "make_site: dimension mismatch");
  Site s;
  s.x = x;
  s.lo.resize(gap_slots(D));
  s.hi.resize(s.lo.size());
  fill_site(D, x.data(), s.lo.data(), s.hi.data());
  return s;
}

double site_min_gap(const Site& s) {
  double m = INFINITY;
  for (std::size_t i = 0; i < s.lo.size(); ++i) m = std::min({m, s.lo[i], s.hi[i]});
  return m;
}

InitialMeasure InitialMeasure::atom(Point y0, double mass) {
  require(std::isfinite(mass), "atom: mass must be finite");
  InitialMeasure m;
  m.atoms_.push_back({std::move(y0), mass});
  return m;
}

InitialMeasure InitialMeasure::density(std::function<double(const Site&)> f, std::string label,
                                       std::optional<bool> bounded) {
  InitialMeasure m;
  m.densities_.push_back({std::move(f), std::move(label), bounded});
  return m;
}

InitialMeasure InitialMeasure::sum(const std::vector<InitialMeasure>& parts) {
  InitialMeasure m;
  for (const auto& p : parts) {
    m.atoms_.insert(m.atoms_.end(), p.atoms_.begin(), p.atoms_.end());
    m.densities_.insert(m.densities_.end(), p.densities_.begin(), p.densities_.end());
  }
  return m;
}

InitialMeasure InitialMeasure::uniform(double value) {
  return density([value](const Site&) { return value; }, label("uniform", {value}), true);
}

InitialMeasure InitialMeasure::gap_product_power(double exponent, double scale) {
  return density(
      [exponent, scale](const Site& s) {
        double p = 1;
        for (std::size_t i = 0; i < s.lo.size(); ++i) p *= s.lo[i] * s.hi[i];
        return scale * std::pow(p, -exponent);
      },
      label("gap_product_power", {exponent, scale}), exponent <= 0);
}

InitialMeasure InitialMeasure::sin_power(double L, double exponent, double scale) {
  return density(
      [L, exponent, scale](const Site& s) {
        double p = 1;
        for (std::size_t i = 0; i < s.lo.size(); ++i)
          p *= std::sin(std::numbers::pi * std::min(s.lo[i], s.hi[i]) / L);
        return scale * std::pow(p, -exponent);
      },
      label("sin_power", {L, exponent, scale}), exponent <= 0);
}

InitialMeasure InitialMeasure::ball_power(double b0, double b1, double scale) {
  return density(
      [b0, b1, scale](const Site& s) {
        return scale * std::pow(s.lo[0], -b0) * std::pow(s.hi[0], -b1);
      },
      label("ball_power", {b0, b1, scale}), b0 <= 0 && b1 <= 0);
}

InitialMeasure InitialMeasure::annulus_power(double R1, double b0, double b1, double b2,
                                             double scale) {
  return density(
      [R1, b0, b1, b2, scale](const Site& s) {
        double r = R1 + s.lo[0];
        return scale * std::pow(r, b0) * std::pow(s.lo[0], -b1) * std::pow(s.hi[0], -b2);
      },
      label("annulus_power", {R1, b0, b1, b2, scale}), b1 <= 0 && b2 <= 0);
}

double InitialMeasure::density_at(const Site& s) const {
  double v = 0;
  for (const auto& d : densities_) v += d.f(s);
  return v;
}

double InitialMeasure::abs_density_at(const Site& s) const {
  double v = 0;
  for (const auto& d : densities_) v += std::abs(d.f(s));
  return v;
}

void InitialMeasure::check_support(const Domain& D) const {
  for (const auto& a : atoms_) {
    require(int(a.y0.size()) == D.dim(), "initial measure: atom dimension mismatch");
    require(D.contains(a.y0), "initial measure: atom outside the open domain " + D.name());
  }
}

namespace {

struct DomainIntegrator {
  const std::function<double(const Site&)>& F;
  double eps, tol;
  const Point* focus;
  int max_level;
  Site site;
  bool divergent = false;
  long evaluations = 0;

  double run1d(double a, double b, std::vector<double> breaks,
               const std::function<double(double, double, double)>& g) {
    if (!(b > a)) return 0.0;
    auto r = quad::tanh_sinh_split(g, a, b, std::move(breaks), tol, max_level);
    evaluations += r.evaluations;
    if (r.divergent) divergent = true;
    return r.value;
  }

  // Integrate coordinates of D (at x-offset xo, gap-offset go), then cont().
  double integ(const Domain& D, int xo, int go, const std::function<double()>& cont) {
    using K = Domain::Kind;
    const double pi = std::numbers::pi;
    switch (D.kind()) {
      case K::Interval:
      case K::Box: {
        const double L = D.length();
        std::function<double(int)> axis = [&](int i) -> double {
          if (i == D.dim()) return cont();
          std::vector<double> br;
          if (focus) br.push_back((*focus)[xo + i]);
          return run1d(eps, L - eps, br, [&, i](double x, double gl, double gh) {
            site.x[xo + i] = x;
            site.lo[go + i] = gl + eps;
            site.hi[go + i] = gh + eps;
            return axis(i + 1);
          });
        };
        return axis(0);
      }
      case K::Ball: {
        const int d = D.dim();
        const double R = D.radius();
        if (d == 1) {
          std::vector<double> br{0.0};
          if (focus) br.push_back((*focus)[xo]);
          return run1d(-R + eps, R - eps, br, [&](double x, double gl, double gh) {
            site.x[xo] = x;
            site.lo[go] = std::abs(x);
            site.hi[go] = (x > 0 ? gh : gl) + eps;
            return cont();
          });
        }
        require(d <= 3, "integrate_domain: Ball integration supports d <= 3");
        Point fc(d, 0.0);
        if (focus)
          for (int i = 0; i < d; ++i) fc[i] = (*focus)[xo + i];
        double fr = norm2(fc.data(), d);
        std::vector<double> rbr;
        if (focus) rbr.push_back(fr);
        if (d == 2) {
          double fth = std::atan2(fc[1], fc[0]);
          if (fth < 0) fth += 2 * pi;
          return run1d(0.0, R - eps, rbr, [&](double r, double, double gh) {
            site.lo[go] = r;
            site.hi[go] = gh + eps;
            std::vector<double> tbr;
            if (focus) tbr.push_back(fth);
            return r * run1d(0.0, 2 * pi, tbr, [&, r](double th, double, double) {
              site.x[xo] = r * std::cos(th);
              site.x[xo + 1] = r * std::sin(th);
              return cont();
            });
          });
        }
        // d == 3: r, u = cos(theta), phi.
        double fu = fr > 0 ? fc[2] / fr : 0.0;
        double fph = std::atan2(fc[1], fc[0]);
        if (fph < 0) fph += 2 * pi;
        return run1d(0.0, R - eps, rbr, [&](double r, double, double gh) {
          site.lo[go] = r;
          site.hi[go] = gh + eps;
          std::vector<double> ubr;
          if (focus) ubr.push_back(fu);
          return r * r * run1d(-1.0, 1.0, ubr, [&, r](double u, double, double) {
            double sn = std::sqrt(std::max(0.0, 1 - u * u));
            std::vector<double> pbr;
            if (focus) pbr.push_back(fph);
            return run1d(0.0, 2 * pi, pbr, [&, r, u, sn](double ph, double, double) {
              site.x[xo] = r * sn * std::cos(ph);
              site.x[xo + 1] = r * sn * std::sin(ph);
              site.x[xo + 2] = r * u;
              return cont();
            });
          });
        });
      }
      case K::Annulus: {
        const double R1 = D.inner_radius(), R2 = D.outer_radius();
        std::vector<double> rbr;
        double fth = 0;
        if (focus) {
          double a = (*focus)[xo], b = (*focus)[xo + 1];
          rbr.push_back(std::hypot(a, b));
          fth = std::atan2(b, a);
          if (fth < 0) fth += 2 * pi;
        }
        return run1d(R1 + eps, R2 - eps, rbr, [&](double r, double gl, double gh) {
          site.lo[go] = gl + eps;
          site.hi[go] = gh + eps;
          std::vector<double> tbr;
          if (focus) tbr.push_back(fth);
          return r * run1d(0.0, 2 * pi, tbr, [&, r](double th, double, double) {
            site.x[xo] = r * std::cos(th);
            site.x[xo + 1] = r * std::sin(th);
            return cont();
          });
        });
      }
      case K::Product: {
        const auto& fs = D.factors();
        std::function<double(std::size_t, int, int)> chain = [&](std::size_t k, int x0,
                                                                 int g0) -> double {
          if (k == fs.size()) return cont();
          return integ(fs[k], x0, g0,
                       [&, k, x0, g0] { return chain(k + 1, x0 + fs[k].dim(), g0 + gap_slots(fs[k])); });
        };
        return chain(0, xo, go);
      }
    }
    return 0.0;
  }
};

}  // namespace

quad::Result integrate_domain(const Domain& D, double eps,
                              const std::function<double(const Site&)>& F, double rel_tol,
                              const Point* focus, int max_level) {
  require(eps >= 0, "integrate_domain: eps must be >= 0");
  if (focus) require(int(focus->size()) == D.dim(), "integrate_domain: focus dimension mismatch");
  DomainIntegrator I{F, eps, rel_tol, focus, max_level, {}, false, 0};
  I.site.x.assign(D.dim(), 0.0);
  I.site.lo.assign(gap_slots(D), 0.0);
  I.site.hi.assign(gap_slots(D), 0.0);
  quad::Result r;
  r.value = I.integ(D, 0, 0, [&] {
    double v = F(I.site);
    if (!std::isfinite(v)) I.divergent = true;
    return v;
  });
  r.evaluations = I.evaluations;
  r.divergent = I.divergent || !std::isfinite(r.value) || std::abs(r.value) > quad::kDivergentSum;
  return r;
}

QuadValue integrate_abs_measure(const Domain& D, const InitialMeasure& nu, double eps,
                                const std::function<double(const Site&)>& w, double rel_tol,
                                const Point* focus) {
  QuadValue out;
  quad::KahanSum s;
  for (const auto& a : nu.atoms()) {
    if (!D.inner_region_contains(eps, a.y0)) continue;
    s.add(std::abs(a.mass) * w(make_site(D, a.y0)));
  }
  if (!nu.densities().empty()) {
    auto r = integrate_domain(
        D, eps, [&](const Site& st) { return nu.abs_density_at(st) * w(st); }, rel_tol, focus);
    if (r.divergent) {
      out.finite = false;
      out.value = INFINITY;
      return out;
    }
    s.add(r.value);
  }
  out.value = s.value();
  return out;
}

QuadValue total_variation(const Domain& D, const InitialMeasure& nu) {
  return integrate_abs_measure(D, nu, 0.0, [](const Site&) { return 1.0; });
}

bool has_bounded_density(const Domain& D, const InitialMeasure& nu) {
  if (nu.densities().empty()) return false;
  Point c = D.lower_corner(), hi = D.upper_corner();
  for (int i = 0; i < D.dim(); ++i) c[i] = 0.5 * (c[i] + hi[i]);
  if (D.kind() == Domain::Kind::Annulus) c = {0.5 * (D.inner_radius() + D.outer_radius()), 0.0};
  for (const auto& d : nu.densities()) {
    if (d.bounded.has_value()) {
      if (!*d.bounded) return false;
      continue;
    }
    // Probe along every axis from the center toward both faces and the center itself.
    double ref = std::abs(d.f(make_site(D, c)));
    double big = 1e6 * std::max(ref, 1.0);
    for (int ax = 0; ax < D.dim(); ++ax) {
      for (int sgn : {-1, 1}) {
        for (int k = 1; k <= 12; ++k) {
          Point p = c;
          double lo = D.lower_corner()[ax], up = D.upper_corner()[ax];
          double edge = sgn < 0 ? lo : up;
          p[ax] = c[ax] + (1 - std::pow(10.0, -k)) * (edge - c[ax]);
          if (!D.contains(p)) continue;
          double v = std::abs(d.f(make_site(D, p)));
          if (!std::isfinite(v) || v > big) return false;
          Point q = c;
          q[ax] = c[ax] + std::pow(10.0, -k) * sgn;
          if (D.contains(q)) {
            double vq = std::abs(d.f(make_site(D, q)));
            if (!std::isfinite(vq) || vq > big) return false;
          }
        }
      }
    }
  }
  return true;
}

}  // namespace spde
