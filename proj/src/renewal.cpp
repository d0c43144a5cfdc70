#include "spde/renewal.hpp"

#include <algorithm>
#include <boost/math/special_functions/gamma.hpp>
#include <cmath>
#include <limits>

#include "spde/error.hpp"
#include "spde/quadrature.hpp"

namespace spde {

namespace {

void check_rho(double rho) { require(rho > 0 && rho < 1, "rho must lie in (0,1)"); }

// ∫_0^u k̂ and ∫_0^u v k̂(v) dv
double A0(double rho, double u) {
  return u <= 1 ? std::pow(u, 1 - rho) / (1 - rho) : 1 / (1 - rho) + (u - 1);
}
double A1(double rho, double u) {
  return u <= 1 ? std::pow(u, 2 - rho) / (2 - rho) : 1 / (2 - rho) + (u * u - 1) / 2;
}

double logsumexp(const std::vector<double>& v) {
  double m = -INFINITY;
  for (double x : v) m = std::max(m, x);
  if (!std::isfinite(m)) return m;
  quad::KahanSum s;
  for (double x : v) s.add(std::exp(x - m));
  return m + std::log(s.value());
}

// Monotone cubic (Fritsch-Carlson) interpolation on sorted xs.
struct Pchip {
  std::vector<double> x, y, d;
  Pchip(std::vector<double> xs, std::vector<double> ys) : x(std::move(xs)), y(std::move(ys)) {
    int n = int(x.size());
    d.assign(n, 0.0);
    std::vector<double> del(n - 1);
    for (int i = 0; i + 1 < n; ++i) del[i] = (y[i + 1] - y[i]) / (x[i + 1] - x[i]);
    d[0] = del[0];
    d[n - 1] = del[n - 2];
    for (int i = 1; i + 1 < n; ++i) {
      if (del[i - 1] * del[i] <= 0) {
        d[i] = 0;
      } else {
        double h0 = x[i] - x[i - 1], h1 = x[i + 1] - x[i];
        double w1 = 2 * h1 + h0, w2 = h1 + 2 * h0;
        d[i] = (w1 + w2) / (w1 / del[i - 1] + w2 / del[i]);
      }
    }
  }
  double operator()(double t) const {
    auto it = std::upper_bound(x.begin(), x.end(), t);
    int i = std::clamp(int(it - x.begin()) - 1, 0, int(x.size()) - 2);
    double h = x[i + 1] - x[i], s = (t - x[i]) / h;
    double h00 = (1 + 2 * s) * (1 - s) * (1 - s), h10 = s * (1 - s) * (1 - s);
    double h01 = s * s * (3 - 2 * s), h11 = s * s * (s - 1);
    return h00 * y[i] + h10 * h * d[i] + h01 * y[i + 1] + h11 * h * d[i + 1];
  }
};

}  // namespace

void validate(const RenewalParams& p) {
  check_rho(p.rho);
  require(p.lambda >= 0, "lambda must be nonnegative");
  require(p.N >= 1, "series truncation N must be >= 1");
  require(p.quad_tol > 0, "quad_tol must be positive");
}

double khat(double rho, double t) {
  check_rho(rho);
  require(t > 0, "khat: t must be positive");
  return t >= 1 ? 1.0 : std::pow(t, -rho);
}

double log_hstar(double rho, int n, double t) {
  check_rho(rho);
  require(n >= 0 && t > 0, "hstar: need n >= 0 and t > 0");
  std::vector<double> terms;
  const double lg = std::lgamma(1 - rho);
  for (int k = 0; k <= n; ++k) {
    double lb = std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0);
    terms.push_back(lb + k * lg - std::lgamma(n - k * rho + 1) + (n - k * rho) * std::log(t));
  }
  return logsumexp(terms);
}

double hstar_n_closed(double rho, int n, double t) {
  require(n >= 1, "hstar_n_closed: n must be >= 1");
  require(n <= 60, "hstar_n_closed: n > 60 overflows the closed form; use log_hstar");
  return std::exp(log_hstar(rho, n, t));
}

RenewalGrid::RenewalGrid(double rho, std::vector<double> nodes) : rho_(rho), s_(std::move(nodes)) {
  check_rho(rho);
  require(s_.size() >= 2 && s_[0] == 0.0, "RenewalGrid: nodes must start at 0");
  for (std::size_t i = 1; i < s_.size(); ++i) require(s_[i] > s_[i - 1], "RenewalGrid: nodes must increase");
  const int n = int(s_.size());
  w_.assign(offset(n), 0.0);
  const auto& gl = quad::gauss_legendre(4);
  for (int i = 1; i < n; ++i) {
    double* w = &w_[offset(i)];
    const double s = s_[i];
    for (int j = 0; j < i; ++j) {
      double h = s_[j + 1] - s_[j];
      double ua = s - s_[j + 1], ub = s - s_[j];
      double wl, wr;
      if (ua >= 1) {
        wl = wr = h / 2;
      } else if (h < 0.05 * ua && ub <= 1) {
        // smooth kernel on a short panel
        wl = wr = 0;
        for (std::size_t q = 0; q < gl.x.size(); ++q) {
          double u = 0.5 * (ua + ub) + 0.5 * h * gl.x[q];
          double k = (u >= 1 ? 1.0 : std::pow(u, -rho)) * 0.5 * h * gl.w[q];
          wl += k * (u - ua) / h;
          wr += k * (ub - u) / h;
        }
      } else {
        double I0 = A0(rho, ub) - A0(rho, ua), I1 = A1(rho, ub) - A1(rho, ua);
        wl = (I1 - ua * I0) / h;
        wr = (ub * I0 - I1) / h;
      }
      w[j] += wl;
      w[j + 1] += wr;
    }
  }
}

RenewalGrid RenewalGrid::graded(double rho, double T, int M, double q) {
  require(T > 0 && M >= 2, "RenewalGrid::graded: need T > 0 and M >= 2");
  std::vector<double> s(M + 1);
  for (int j = 0; j <= M; ++j) s[j] = T * std::pow(double(j) / M, q);
  s[M] = T;
  return RenewalGrid(rho, std::move(s));
}

void RenewalGrid::row(int i, std::vector<double>& out) const {
  out.assign(w_.begin() + offset(i), w_.begin() + offset(i) + i + 1);
}

std::vector<double> RenewalGrid::convolve(const std::vector<double>& f) const {
  require(f.size() == s_.size(), "RenewalGrid::convolve: size mismatch");
  std::vector<double> out(s_.size(), 0.0);
  for (int i = 1; i < size(); ++i) {
    const double* w = &w_[offset(i)];
    double acc = 0;
    for (int j = 0; j <= i; ++j) acc += w[j] * f[j];
    out[i] = acc;
  }
  return out;
}

namespace {

std::vector<double> hhat_on_grid(const RenewalGrid& g, int N) {
  std::vector<double> out(N + 1);
  std::vector<double> f(g.size(), 1.0);
  out[0] = 1.0;
  for (int n = 1; n <= N; ++n) {
    f = g.convolve(f);
    out[n] = f.back();
  }
  return out;
}

constexpr int kMaxGrid = 4096;

}  // namespace

std::vector<double> hhat_all(double rho, int N, double t, double rel_tol) {
  check_rho(rho);
  require(N >= 0 && t > 0, "hhat: need n >= 0 and t > 0");
  if (N == 0) return {1.0};
  // Richardson on doubled graded grids; accepted once two successive
  // extrapolations agree.
  int M = 128;
  auto prev = hhat_on_grid(RenewalGrid::graded(rho, t, M), N);
  std::vector<double> rich_prev;
  while (true) {
    M *= 2;
    auto cur = hhat_on_grid(RenewalGrid::graded(rho, t, M), N);
    std::vector<double> rich(N + 1);
    for (int n = 0; n <= N; ++n) rich[n] = cur[n] + (cur[n] - prev[n]) / 3;
    bool ok = !rich_prev.empty();
    for (int n = 0; ok && n <= N; ++n)
      if (std::abs(rich[n] - rich_prev[n]) > rel_tol * std::abs(rich[n])) ok = false;
    if (ok || M >= kMaxGrid) return rich;
    prev = std::move(cur);
    rich_prev = std::move(rich);
  }
}

double hhat_n(double rho, int n, double t, double rel_tol) {
  require(n >= 0, "hhat_n: n must be >= 0");
  if (n == 0) return 1.0;
  return hhat_all(rho, n, t, rel_tol)[n];
}

double htilde_n(double rho, int n, double t, double rel_tol) {
  check_rho(rho);
  require(n >= 0 && n <= 4, "htilde_n: nested quadrature supports 0 <= n <= 4");
  require(t > 0, "htilde_n: t must be positive");
  if (n == 0) return 1.0;
  // H_m(s) = ∫_0^s (1 ∧ (s-r)r/s)^{-ρ} H_{m-1}(r) dr; below s = 4 each H_m is
  // a pure power c s^{m(1-ρ)}, which fixes the extrapolation below the grid.
  const int K = 400;
  const double lo = std::min(1e-6, 1e-6 * t);
  std::vector<double> lr(K + 1);
  for (int k = 0; k <= K; ++k) lr[k] = std::log(lo) + (std::log(t) - std::log(lo)) * k / K;
  std::vector<double> lH(K + 1, 0.0);  // H_0 = 1
  double expo = 0;
  for (int m = 1; m <= n; ++m) {
    Pchip H(lr, lH);
    const double ex = expo, lr0 = lr[0], lH0 = lH[0];
    auto Hprev = [&](double r) {
      double l = std::log(r);
      if (l <= lr0) return std::exp(lH0 + ex * (l - lr0));
      return std::exp(H(l));
    };
    std::vector<double> next(K + 1);
    for (int k = 0; k <= K; ++k) {
      double s = std::exp(lr[k]);
      std::vector<double> br;
      if (s > 4) {
        double q = std::sqrt(s * s - 4 * s);
        br = {(s - q) / 2, (s + q) / 2};
      }
      auto f = [&](double r, double glo, double ghi) {
        double z = ghi * glo / s;
        double k1 = z >= 1 ? 1.0 : std::pow(z, -rho);
        (void)r;
        return k1 * Hprev(glo);
      };
      auto res = quad::tanh_sinh_split(f, 0.0, s, br, rel_tol * 0.1, 12);
      next[k] = std::log(res.value);
    }
    lH = std::move(next);
    expo += 1 - rho;
  }
  return std::exp(lH.back());
}

SeriesValue Khat_lambda(const RenewalParams& p, double t) {
  validate(p);
  require(t > 0, "Khat_lambda: t must be positive");
  SeriesValue out;
  if (p.lambda == 0) {
    out.value = 1;
    out.terms = 1;
    out.converged = true;
    return out;
  }
  const double l2 = std::log(p.lambda * p.lambda);
  auto tail_after = [&](int n) -> double {
    // Σ_{m>n} λ^{2m} h*_m bounded geometrically once the term ratio drops below 1.
    double a = l2 * (n + 1) + log_hstar(p.rho, n + 1, t);
    double b = l2 * (n + 2) + log_hstar(p.rho, n + 2, t);
    double r = std::exp(b - a);
    if (r >= 1) return double(INFINITY);
    return std::exp(a) / (1 - r);
  };
  // The grid cost does not depend on N, so all terms come from one table.
  auto h = hhat_all(p.rho, p.N, t, std::min(p.quad_tol, 1e-6));
  quad::KahanSum s;
  double lam = 1;
  for (int n = 0; n <= p.N; ++n) {
    s.add(lam * h[n]);
    lam *= p.lambda * p.lambda;
    out.value = s.value();
    out.terms = n + 1;
    out.tail = tail_after(n);
    out.converged = out.tail < p.quad_tol * out.value;
    if (out.converged) break;
  }
  return out;
}

std::vector<double> log_Khat_volterra(double rho, double lambda, const std::vector<double>& ts,
                                      double h) {
  check_rho(rho);
  require(lambda >= 0 && h > 0, "log_Khat_volterra: need lambda >= 0 and h > 0");
  double T = 0;
  for (double t : ts) {
    require(t > 0, "log_Khat_volterra: times must be positive");
    T = std::max(T, t);
  }
  // Graded start on [0, min(T,1)], uniform steps of h afterwards.
  std::vector<double> s;
  const double T0 = std::min(T, 1.0);
  const int M0 = 400;
  for (int j = 0; j <= M0; ++j) s.push_back(T0 * std::pow(double(j) / M0, 3.0));
  int extra = int(std::ceil((T - T0) / h));
  for (int j = 1; j <= extra; ++j) s.push_back(T0 + (T - T0) * j / extra);
  RenewalGrid g(rho, s);
  const double l2 = lambda * lambda;
  std::vector<double> lk(s.size(), 0.0), row;
  for (int i = 1; i < g.size(); ++i) {
    g.row(i, row);
    double m = lk[i - 1];
    double acc = 0;
    for (int j = 0; j < i; ++j) acc += row[j] * std::exp(lk[j] - m);
    double den = 1 - l2 * row[i];
    if (!(den > 0)) throw NumericalError("log_Khat_volterra: step too large for lambda; reduce h");
    lk[i] = m + std::log(std::exp(-m) + l2 * acc) - std::log(den);
  }
  std::vector<double> out;
  for (double t : ts) {
    auto it = std::lower_bound(s.begin(), s.end(), t);
    std::size_t i = std::clamp<std::size_t>(it - s.begin(), 1, s.size() - 1);
    double a = (t - s[i - 1]) / (s[i] - s[i - 1]);
    out.push_back((1 - a) * lk[i - 1] + a * lk[i]);
  }
  return out;
}

double renewal_growth_rate(double rho, double lambda) {
  check_rho(rho);
  require(lambda > 0, "renewal_growth_rate: lambda must be positive");
  auto F = [&](double lg) {
    double g = std::exp(lg);
    double L = boost::math::tgamma_lower(1 - rho, std::min(g, 1e300)) * std::pow(g, rho - 1) +
               std::exp(-g) / g;
    return std::log(lambda * lambda) + std::log(L);
  };
  double a = std::log(1e-14), b = std::log(1e14);
  require(F(a) > 0 && F(b) < 0, "renewal_growth_rate: root outside bracket");
  for (int it = 0; it < 200; ++it) {
    double m = 0.5 * (a + b);
    (F(m) > 0 ? a : b) = m;
  }
  return std::exp(0.5 * (a + b));
}

double beta_integral_closed(const std::vector<double>& r, double t) {
  require(r.size() >= 1, "beta_integral_closed: need at least one exponent");
  require(t > 0, "beta_integral_closed: t must be positive");
  const double n = double(r.size()) - 1;
  double lsum = 0, rs = 0;
  for (double ri : r) {
    require(ri > -1, "beta_integral_closed: exponents must exceed -1");
    lsum += std::lgamma(1 + ri);
    rs += ri;
  }
  return std::exp(lsum - std::lgamma(n + rs + 1) + (n + rs) * std::log(t));
}

double exp_identity_residual(double C, double t, double s, const std::vector<double>& v,
                             const std::vector<double>& w) {
  require(0 < s && s < t, "exp_identity_residual: need 0 < s < t");
  require(v.size() == w.size(), "exp_identity_residual: dimension mismatch");
  double v2 = 0, vw = 0, w2 = 0, z = 0;
  const double a = (t - s) / t;
  for (std::size_t i = 0; i < v.size(); ++i) {
    v2 += v[i] * v[i];
    vw += (v[i] - w[i]) * (v[i] - w[i]);
    w2 += w[i] * w[i];
    z += (v[i] - a * w[i]) * (v[i] - a * w[i]);
  }
  double lhs = std::exp(-C * v2 / (t - s)) * std::exp(-C * vw / s);
  double rhs = std::exp(-C * w2 / t) * std::exp(-C * z / ((t - s) * s / t));
  return std::abs(lhs - rhs);
}

double mittag_sum(double x, double a) {
  require(a > 0 && x >= 0, "mittag_sum: need a > 0 and x >= 0");
  if (x == 0) return 1.0;
  std::vector<double> lt;
  double best = -INFINITY;
  for (int n = 0;; ++n) {
    double l = n * std::log(x) - a * std::lgamma(n + 1.0);
    lt.push_back(l);
    best = std::max(best, l);
    if (n > 2 && l < lt[n - 1] && l < best - 40) break;
    if (n > 1000000) throw NumericalError("mittag_sum: no convergence");
  }
  return std::exp(logsumexp(lt));
}

SeriesValue gronwall_series(const std::function<double(double)>& b, double lambda, double rho,
                            double t, int N, double rel_tol) {
  check_rho(rho);
  require(t > 0 && N >= 0, "gronwall_series: need t > 0 and N >= 0");
  auto run = [&](int M, std::vector<double>& terms) {
    auto g = RenewalGrid::graded(rho, t, M);
    std::vector<double> f(g.size());
    for (int i = 0; i < g.size(); ++i) {
      f[i] = b(g.nodes()[i]);
      require(f[i] >= 0, "gronwall_series: b must be nonnegative");
    }
    terms.assign(N + 1, 0.0);
    terms[0] = f.back();
    double lam = 1;
    for (int n = 1; n <= N; ++n) {
      f = g.convolve(f);
      lam *= lambda * lambda;
      terms[n] = lam * f.back();
    }
  };
  std::vector<double> prev, cur;
  int M = 128;
  run(M, prev);
  while (true) {
    M *= 2;
    run(M, cur);
    double sp = 0, sc = 0;
    for (int n = 0; n <= N; ++n) {
      sp += prev[n];
      sc += cur[n];
    }
    double best = sc + (sc - sp) / 3;
    if (std::abs(sc - sp) / 3 <= rel_tol * std::abs(best) || M >= kMaxGrid) {
      SeriesValue out;
      out.value = best;
      out.terms = N + 1;
      double r = N >= 1 && cur[N - 1] > 0 ? cur[N] / cur[N - 1] : 0.0;
      out.tail = r < 1 ? cur[N] * r / (1 - r) : INFINITY;
      out.converged = out.tail <= std::max(rel_tol * std::abs(best), 1e-300) || best == 0;
      return out;
    }
    prev = cur;
  }
}

}  // namespace spde
