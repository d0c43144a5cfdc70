#include "spde/quadrature.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>
#include <numbers>

#include "spde/error.hpp"

namespace spde::quad {

namespace {

// Largest |tau| kept: beyond it the abscissae sit closer than ~1e-300 (relative)
// to an endpoint.
constexpr double kTauMax = 6.56;

struct Node {
  double gap;  // distance to the nearer endpoint, scaled to half-width 1
  double w;    // weight, scaled to half-width 1
};

Node node(double tau) {
  const double hp = std::numbers::pi / 2;
  double u = hp * std::sinh(tau);
  double e = std::exp(-2 * std::abs(u));
  double gap = 2 * e / (1 + e);  // 1 - tanh|u|
  double ch = std::cosh(u);
  double w = hp * std::cosh(tau) / (ch * ch);
  return {gap, w};
}

}  // namespace

Result tanh_sinh(const Integrand& f, double a, double b, double rel_tol, int max_level) {
  require(b > a, "tanh_sinh: empty interval");
  const double c = 0.5 * (a + b), hw = 0.5 * (b - a);
  Result r;
  bool bad = false;
  auto eval = [&](double tau) -> double {
    Node n = node(tau);
    double g = hw * n.gap;
    // Nodes this close to an end only feed overflow (x^{-2} already reaches
    // 1e300 there) and carry no mass for integrable singularities.
    if (g <= 1e-150 * (b - a)) return 0.0;
    double v;
    if (tau > 0) {
      v = f(b - g, (b - a) - g, g);
    } else if (tau < 0) {
      v = f(a + g, g, (b - a) - g);
    } else {
      v = f(c, hw, hw);
    }
    ++r.evaluations;
    if (!std::isfinite(v)) bad = true;
    return v * n.w * hw;
  };

  double h = 1.0;
  KahanSum sum;
  sum.add(eval(0.0));
  for (double tau = h; tau <= kTauMax; tau += h) {
    sum.add(eval(tau));
    sum.add(eval(-tau));
  }
  double prev = sum.value() * h;
  if (bad) {
    r.divergent = true;
    r.value = INFINITY;
    return r;
  }
  for (int level = 1; level <= max_level; ++level) {
    h *= 0.5;
    for (double tau = h; tau <= kTauMax; tau += 2 * h) {
      sum.add(eval(tau));
      sum.add(eval(-tau));
    }
    double cur = sum.value() * h;
    if (bad || std::abs(cur) > kDivergentSum || r.evaluations > kMaxEvaluations) {
      r.divergent = true;
      r.value = bad ? INFINITY : cur;
      return r;
    }
    r.error = std::abs(cur - prev);
    r.value = cur;
    if (level >= 3 && r.error <= rel_tol * std::abs(cur)) return r;
    if (level >= 3 && std::abs(cur) < 1e-300 && r.error == 0.0) return r;
    prev = cur;
  }
  return r;
}

Result tanh_sinh_split(const Integrand& f, double a, double b, std::vector<double> breaks,
                       double rel_tol, int max_level) {
  std::sort(breaks.begin(), breaks.end());
  std::vector<double> pts{a};
  for (double x : breaks)
    if (x > pts.back() + 1e-14 * (b - a) && x < b - 1e-14 * (b - a)) pts.push_back(x);
  pts.push_back(b);
  Result total;
  for (std::size_t i = 0; i + 1 < pts.size(); ++i) {
    double lo = pts[i], hi = pts[i + 1];
    // Gaps inside a sub-interval are reported relative to the outer interval.
    auto g = [&](double x, double gl, double gh) {
      return f(x, (lo - a) + gl, (b - hi) + gh);
    };
    Result r = tanh_sinh(g, lo, hi, rel_tol, max_level);
    total.value += r.value;
    total.error += r.error;
    total.evaluations += r.evaluations;
    total.divergent = total.divergent || r.divergent;
  }
  if (std::abs(total.value) > kDivergentSum) total.divergent = true;
  return total;
}

const Rule& gauss_legendre(int n) {
  require(n >= 1 && n <= 512, "gauss_legendre: order out of range");
  static std::mutex mu;
  static std::map<int, Rule> cache;
  std::lock_guard<std::mutex> lock(mu);
  auto it = cache.find(n);
  if (it != cache.end()) return it->second;
  Rule r;
  r.x.resize(n);
  r.w.resize(n);
  for (int i = 0; i < (n + 1) / 2; ++i) {
    double z = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
    double dp = 0;
    for (int it2 = 0; it2 < 100; ++it2) {
      double p0 = 1, p1 = 0;
      for (int k = 1; k <= n; ++k) {
        double p2 = p1;
        p1 = p0;
        p0 = ((2.0 * k - 1) * z * p1 - (k - 1.0) * p2) / k;
      }
      dp = n * (z * p0 - p1) / (z * z - 1);
      double dz = p0 / dp;
      z -= dz;
      if (std::abs(dz) < 1e-16) break;
    }
    {
      double p0 = 1, p1 = 0;
      for (int k = 1; k <= n; ++k) {
        double p2 = p1;
        p1 = p0;
        p0 = ((2.0 * k - 1) * z * p1 - (k - 1.0) * p2) / k;
      }
      dp = n * (z * p0 - p1) / (z * z - 1);
    }
    r.x[i] = -z;
    r.x[n - 1 - i] = z;
    r.w[i] = r.w[n - 1 - i] = 2 / ((1 - z * z) * dp * dp);
  }
  return cache.emplace(n, std::move(r)).first->second;
}

double composite_gl(const std::function<double(double)>& f, double a, double b, int panels,
                    int order) {
  const Rule& R = gauss_legendre(order);
  double h = (b - a) / panels;
  KahanSum s;
  for (int p = 0; p < panels; ++p) {
    double c = a + (p + 0.5) * h;
    for (int i = 0; i < order; ++i) s.add(R.w[i] * f(c + 0.5 * h * R.x[i]));
  }
  return s.value() * 0.5 * h;
}

double simpson_refined(const std::function<double(double)>& f, double a, double b,
                       double rel_tol, int start, int max_panels) {
  int n = std::max(2, start + (start & 1));
  double h = (b - a) / n;
  KahanSum ends, odd, even;
  ends.add(f(a));
  ends.add(f(b));
  for (int i = 1; i < n; ++i) (i % 2 ? odd : even).add(f(a + i * h));
  double prev = h / 3 * (ends.value() + 4 * odd.value() + 2 * even.value());
  while (n < max_panels) {
    // Old odd and even points become the new even points.
    KahanSum ne;
    ne.add(odd.value());
    ne.add(even.value());
    n *= 2;
    h *= 0.5;
    KahanSum no;
    for (int i = 1; i < n; i += 2) no.add(f(a + i * h));
    odd = no;
    even = ne;
    double cur = h / 3 * (ends.value() + 4 * odd.value() + 2 * even.value());
    if (std::abs(cur - prev) <= rel_tol * std::abs(cur)) return cur;
    prev = cur;
  }
  throw NumericalError("simpson_refined: no convergence");
}

}  // namespace spde::quad
