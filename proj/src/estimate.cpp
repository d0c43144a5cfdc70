#include "spde/estimate.hpp"

#include <algorithm>
#include <boost/math/distributions/students_t.hpp>
#include <cmath>
#include <map>

#include "spde/error.hpp"
#include "spde/noise.hpp"
#include "spde/quadrature.hpp"
#include "spde/spectral.hpp"

namespace spde {

namespace {

constexpr double kPi = 3.14159265358979323846;

std::size_t checked_time(const Ensemble& e, double t) {
  std::size_t ti = e.time_index(t);
  require(ti < e.times.size(), "estimate: time not recorded in the ensemble");
  return ti;
}

std::size_t checked_point(const Ensemble& e, const Point& x) {
  std::size_t pi = e.point_index(x);
  require(pi < e.points.size(), "estimate: point not recorded in the ensemble");
  return pi;
}

MomentEstimate from_column(const Eigen::VectorXd& col) {
  require(col.size() >= 2, "estimate: need at least two trajectories");
  Eigen::MatrixXd s = col;
  auto [v, se] = jackknife(s, [](const Eigen::VectorXd& m) { return m(0); });
  MomentEstimate r;
  r.value = v;
  r.se = se;
  r.M = long(col.size());
  return r;
}

double student_q975(int dof) {
  if (dof < 1) return INFINITY;
  boost::math::students_t dist(dof);
  return boost::math::quantile(dist, 0.975);
}

}  // namespace

// ---------------------------------------------------------------- moments

std::pair<double, double> jackknife(const Eigen::MatrixXd& samples,
                                    const std::function<double(const Eigen::VectorXd&)>& stat) {
  const long M = samples.rows();
  require(M >= 2, "jackknife: need at least two samples");
  Eigen::VectorXd sum = samples.colwise().sum().transpose();
  double full = stat(sum / double(M));
  std::vector<double> th(M);
  quad::KahanSum mean;
  for (long i = 0; i < M; ++i) {
    th[i] = stat((sum - samples.row(i).transpose()) / double(M - 1));
    mean.add(th[i]);
  }
  double tb = mean.value() / double(M);
  quad::KahanSum ss;
  for (double v : th) ss.add((v - tb) * (v - tb));
  return {full, std::sqrt(double(M - 1) / double(M) * ss.value())};
}

MomentEstimate moment_estimate(const Ensemble& e, double p, double t, const Point& x) {
  require(p > 0, "moment_estimate: p must be positive");
  std::size_t ti = checked_time(e, t), pi = checked_point(e, x);
  Eigen::VectorXd col = e.values[ti].col(long(pi)).array().abs().pow(p);
  MomentEstimate r = from_column(col);
  r.t = e.times[ti];
  r.x = r.xp = x;
  r.p = p;
  return r;
}

MomentEstimate corr_estimate(const Ensemble& e, double t, const Point& x, const Point& xp) {
  std::size_t ti = checked_time(e, t), a = checked_point(e, x), b = checked_point(e, xp);
  Eigen::VectorXd col = e.values[ti].col(long(a)).cwiseProduct(e.values[ti].col(long(b)));
  MomentEstimate r = from_column(col);
  r.t = e.times[ti];
  r.x = x;
  r.xp = xp;
  return r;
}

MomentEstimate mean_estimate(const Ensemble& e, double t, const Point& x) {
  std::size_t ti = checked_time(e, t), pi = checked_point(e, x);
  MomentEstimate r = from_column(e.values[ti].col(long(pi)));
  r.t = e.times[ti];
  r.x = r.xp = x;
  r.p = 1;
  return r;
}

// ---------------------------------------------------------------- fits

SlopeFit linear_fit(const std::vector<double>& x, const std::vector<double>& y, const std::vector<double>& sigma) {
  const std::size_t n = x.size();
  require(n == y.size(), "linear_fit: x and y differ in length");
  require(n >= 3, "linear_fit: need at least three points");
  require(sigma.empty() || sigma.size() == n, "linear_fit: sigma length mismatch");
  std::vector<double> w(n, 1.0);
  if (!sigma.empty())
    for (std::size_t i = 0; i < n; ++i) {
      require(sigma[i] > 0 && std::isfinite(sigma[i]), "linear_fit: sigma must be positive");
      w[i] = 1 / (sigma[i] * sigma[i]);
    }
  double S = 0, Sx = 0, Sy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    require(std::isfinite(x[i]) && std::isfinite(y[i]), "linear_fit: non-finite input");
    S += w[i];
    Sx += w[i] * x[i];
    Sy += w[i] * y[i];
  }
  double xb = Sx / S, yb = Sy / S, Sxx = 0, Sxy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    Sxx += w[i] * (x[i] - xb) * (x[i] - xb);
    Sxy += w[i] * (x[i] - xb) * (y[i] - yb);
  }
  require(Sxx > 0, "linear_fit: x values are all equal");
  SlopeFit f;
  f.points = int(n);
  f.slope = Sxy / Sxx;
  f.intercept = yb - f.slope * xb;
  double rss = 0;
  for (std::size_t i = 0; i < n; ++i) {
    double r = y[i] - f.intercept - f.slope * x[i];
    rss += w[i] * r * r;
  }
  const int dof = int(n) - 2;
  if (sigma.empty())
    f.se = std::sqrt(rss / dof / Sxx);
  else
    f.se = std::sqrt(1 / Sxx);
  double q = student_q975(dof);
  f.ci_lo = f.slope - q * f.se;
  f.ci_hi = f.slope + q * f.se;
  return f;
}

SlopeFit lyapunov_fit(const std::vector<double>& t, const std::vector<double>& m, double t_lo, double t_hi,
                      const std::vector<double>& m_se) {
  require(t.size() == m.size(), "lyapunov_fit: t and m differ in length");
  require(m_se.empty() || m_se.size() == m.size(), "lyapunov_fit: se length mismatch");
  std::vector<double> xs, ys, ss;
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (t[i] < t_lo - 1e-12 || t[i] > t_hi + 1e-12) continue;
    require(m[i] > 0, "lyapunov_fit: moments must be positive");
    xs.push_back(t[i]);
    ys.push_back(std::log(m[i]));
    if (!m_se.empty()) ss.push_back(m_se[i] / m[i]);
  }
  require(xs.size() >= 5, "lyapunov_fit: need at least 5 time points in the window");
  return linear_fit(xs, ys, ss);
}

// ---------------------------------------------------------------- energy

double trapezoid_1d(const std::vector<double>& x, const std::vector<double>& g, double L, double g0, double gL) {
  require(x.size() == g.size() && !x.empty(), "trapezoid_1d: size mismatch");
  quad::KahanSum s;
  double px = 0, pg = g0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    s.add(0.5 * (x[i] - px) * (g[i] + pg));
    px = x[i];
    pg = g[i];
  }
  s.add(0.5 * (L - px) * (gL + pg));
  return s.value();
}

namespace {

struct EnergyLayout {
  int dim = 1;
  double L = 1, h = 1;
  BC bc = BC::Dirichlet;
  std::vector<double> xs;   // 1d centers
  Eigen::VectorXd weight;   // per-center divisor 1/Φ₁² or 1
  std::size_t offset = 0;   // first center column
  std::size_t count = 0;
};

EnergyLayout energy_layout(const SimConfig& cfg, std::size_t n_points, bool weighted) {
  require(cfg.record_grid, "l2_energy: the run must record the grid");
  SimGrid g = make_grid(cfg.domain, cfg.n_space);
  EnergyLayout lay;
  lay.dim = cfg.domain.dim();
  lay.bc = cfg.bc;
  lay.h = g.h;
  lay.offset = cfg.probes.size();
  lay.count = g.centers.size();
  require(n_points == lay.offset + lay.count, "l2_energy: recorded points do not match the grid");
  require(lay.dim <= 2, "l2_energy: d <= 2 only");
  require(!weighted || cfg.bc == BC::Dirichlet, "l2_energy: the weighted energy needs Dirichlet");
  if (lay.dim == 1) {
    lay.L = cfg.domain.length();
    for (auto& c : g.centers) lay.xs.push_back(c[0]);
  }
  lay.weight = Eigen::VectorXd::Ones(long(lay.count));
  if (weighted) {
    EigenPair ep = leading_eigenpair(cfg.domain, cfg.bc);
    for (std::size_t i = 0; i < lay.count; ++i) {
      double p = ep(make_site(cfg.domain, g.centers[i]));
      lay.weight(long(i)) = 1 / (p * p);
    }
  }
  return lay;
}

double integrate_second(const EnergyLayout& lay, const Eigen::VectorXd& m2) {
  Eigen::VectorXd g = m2.cwiseProduct(lay.weight);
  if (lay.dim == 2) return g.sum() * lay.h * lay.h;
  std::vector<double> gv(g.data(), g.data() + g.size());
  bool flat = lay.bc == BC::Neumann || lay.weight(0) != 1.0;
  double g0 = flat ? gv.front() : 0.0, gL = flat ? gv.back() : 0.0;
  return trapezoid_1d(lay.xs, gv, lay.L, g0, gL);
}

}  // namespace

EnergyEstimate l2_energy(const Ensemble& e, const SimConfig& cfg, double t, bool weighted) {
  std::size_t ti = checked_time(e, t);
  EnergyLayout lay = energy_layout(cfg, e.points.size(), weighted);
  const Eigen::MatrixXd& V = e.values[ti];
  require(V.rows() >= 2, "l2_energy: need at least two trajectories");
  Eigen::MatrixXd q(V.rows(), 1);
  for (long r = 0; r < V.rows(); ++r) {
    Eigen::VectorXd u = V.row(r).segment(long(lay.offset), long(lay.count)).transpose();
    q(r, 0) = integrate_second(lay, u.cwiseProduct(u));
  }
  auto [v, se] = jackknife(q, [](const Eigen::VectorXd& m) {
    if (!(m(0) > 0)) throw NumericalError("l2_energy: nonpositive energy");
    return std::sqrt(m(0));
  });
  return {v, se};
}

double log_l2_energy(const MomentSolution& m, const SimConfig& cfg, std::size_t time_index, bool weighted) {
  require(time_index < m.second.size(), "l2_energy: time index out of range");
  EnergyLayout lay = energy_layout(cfg, m.points.size(), weighted);
  Eigen::VectorXd d = m.second[time_index].diagonal().segment(long(lay.offset), long(lay.count));
  double I = integrate_second(lay, d);
  if (!(I > 0)) throw NumericalError("l2_energy: nonpositive energy");
  double sc = time_index < m.log_scale.size() ? m.log_scale[time_index] : 0.0;
  return 0.5 * (std::log(I) + sc);
}

double l2_energy(const MomentSolution& m, const SimConfig& cfg, std::size_t time_index, bool weighted) {
  double E = std::exp(log_l2_energy(m, cfg, time_index, weighted));
  if (!std::isfinite(E)) throw NumericalError("l2_energy: energy overflows, use log_l2_energy");
  return E;
}

SlopeFit excitation_fit(const std::vector<double>& lambdas, const std::vector<double>& energies,
                        ExcitationRegime regime, double baseline_energy) {
  require(baseline_energy > 0, "excitation_fit: baseline energy must be positive");
  std::vector<double> logs;
  for (double e : energies) {
    if (!(e > 0)) throw NumericalError("excitation_fit: nonpositive energy");
    logs.push_back(std::log(e));
  }
  return excitation_fit_log(lambdas, logs, regime, std::log(baseline_energy));
}

SlopeFit excitation_fit_log(const std::vector<double>& lambdas, const std::vector<double>& log_energies,
                            ExcitationRegime regime, double log_baseline) {
  require(lambdas.size() == log_energies.size(), "excitation_fit: size mismatch");
  require(lambdas.size() >= 4, "excitation_fit: need at least 4 points per regime");
  (void)regime;  // same estimator in both regimes; the regime only labels the λ range
  std::vector<double> xs, ys;
  for (std::size_t i = 0; i < lambdas.size(); ++i) {
    require(lambdas[i] > 0, "excitation_fit: lambda must be positive");
    if (!std::isfinite(log_energies[i])) throw NumericalError("excitation_fit: energy is not finite");
    double le = log_energies[i] - log_baseline;
    if (!(le > 0)) throw NumericalError("excitation_fit: energy does not exceed the baseline");
    xs.push_back(std::log(lambdas[i]));
    ys.push_back(std::log(le));
  }
  return linear_fit(xs, ys);
}

// ---------------------------------------------------------------- Riesz mode matrix

namespace {

// S_j = ∫_0^L u^{-β} sin(jπu/L) du and C_j = ∫_0^L u^{-β}(L-u) cos(jπu/L) du,
// with u = r^p, p = 1/(1-β), so that u^{-β} du = p dr.
void riesz_trig_moments(double L, double beta, int J, std::vector<double>& S, std::vector<double>& C) {
  const double p = 1 / (1 - beta);
  const double R = std::pow(L, 1 - beta);
  S.assign(J + 1, 0.0);
  C.assign(J + 1, 0.0);
  const auto& gl = quad::gauss_legendre(16);
  for (int j = 0; j <= J; ++j) {
    const double w = j * kPi / L;
    int panels = 8 + int(std::ceil(1.5 * j * p));
    double hr = R / panels;
    quad::KahanSum s, c;
    for (int q = 0; q < panels; ++q) {
      double a = q * hr;
      for (std::size_t i = 0; i < gl.x.size(); ++i) {
        double r = a + 0.5 * hr * (gl.x[i] + 1);
        double u = std::pow(r, p);
        double ww = 0.5 * hr * gl.w[i] * p;
        s.add(ww * std::sin(w * u));
        c.add(ww * (L - u) * std::cos(w * u));
      }
    }
    S[j] = s.value();
    C[j] = c.value();
  }
}

}  // namespace

Eigen::MatrixXd riesz_mode_matrix(BC bc, double L, double beta, int N) {
  require(L > 0, "riesz_mode_matrix: L must be positive");
  require(beta > 0 && beta < 1, "riesz_mode_matrix: beta must lie in (0, 1)");
  require(N >= 1 && N <= 8192, "riesz_mode_matrix: N out of range");
  const int k0 = bc == BC::Dirichlet ? 1 : 0;
  std::vector<double> S, C;
  riesz_trig_moments(L, beta, k0 + N - 1, S, C);
  auto nrm = [&](int k) { return k == 0 ? 1 / std::sqrt(L) : std::sqrt(2 / L); };
  const double sg = bc == BC::Dirichlet ? 1.0 : -1.0;
  Eigen::MatrixXd W(N, N);
  for (int i = 0; i < N; ++i)
    for (int j = 0; j <= i; ++j) {
      int k = k0 + i, l = k0 + j;
      double v;
      if (k == l) {
        if (k == 0)
          v = 2 * C[0] / L;
        else
          v = nrm(k) * nrm(k) * (C[k] + sg * S[k] / (k * kPi / L));
      } else if ((k + l) % 2) {
        v = 0;
      } else {
        double a = k * kPi / L, b = l * kPi / L;
        v = nrm(k) * nrm(l) * ((S[l] - S[k]) / (a - b) + sg * (S[k] + S[l]) / (a + b));
      }
      W(i, j) = W(j, i) = v;
    }
  return W;
}

// ---------------------------------------------------------------- kO

KOValue kO_quadrature(const HeatKernel& hk, double beta, double t, int grid) {
  require(t > 0, "kO_quadrature: t must be positive");
  require(grid >= 3, "kO_quadrature: grid must have at least 3 points");
  const Domain& D = hk.domain();
  KOValue out;
  if (D.kind() == Domain::Kind::Interval) {
    const double L = D.length();
    int N = int(std::ceil(std::sqrt(40 / t) * L / kPi)) + 10;
    N = std::clamp(N, 16, 4096);
    Eigen::MatrixXd W = riesz_mode_matrix(hk.bc(), L, beta, N);
    const int k0 = hk.bc() == BC::Dirichlet ? 1 : 0;
    Eigen::MatrixXd E(grid, N);
    std::vector<double> xs(grid);
    for (int i = 0; i < grid; ++i) {
      xs[i] = L * i / (grid - 1);
      for (int k = 0; k < N; ++k) {
        double mu = std::pow((k0 + k) * kPi / L, 2);
        E(i, k) = Spectrum::mode1d(hk.bc(), k0 + k, L, xs[i]) * std::exp(-mu * t);
      }
    }
    Eigen::MatrixXd I = E * W * E.transpose();
    Eigen::Index r, c;
    out.value = I.maxCoeff(&r, &c);
    out.argmax_x = {xs[r]};
    out.argmax_xp = {xs[c]};
    out.modes = N;
    return out;
  }
  require(D.kind() == Domain::Kind::Box && D.dim() == 2, "kO_quadrature: Interval or 2d Box only");
  // cell sums on an m×m lattice with cell-averaged kernels; accurate once √t ≫ L/m
  const double L = D.length();
  const int m = 48;
  NoiseGrid g = square_grid(m, L);
  Eigen::MatrixXd Cv = build_covariance(g, beta);
  const int q = std::min(grid, 9);
  std::vector<Point> pts;
  for (int i = 0; i < q; ++i)
    for (int j = 0; j < q; ++j) pts.push_back({L * (i + 0.5) / q, L * (j + 0.5) / q});
  Eigen::MatrixXd V(long(pts.size()), long(g.size()));
  const double h = g.h;
  for (std::size_t p = 0; p < pts.size(); ++p) {
    std::vector<double> ax(m), ay(m);
    for (int i = 0; i < m; ++i) {
      ax[i] = hk.cell_integral_1d(t, pts[p][0], i * h, (i + 1) * h);
      ay[i] = hk.cell_integral_1d(t, pts[p][1], i * h, (i + 1) * h);
    }
    for (std::size_t c = 0; c < g.size(); ++c) V(long(p), long(c)) = ax[g.idx[c][0]] * ay[g.idx[c][1]];
  }
  Eigen::MatrixXd I = V * Cv * V.transpose();
  Eigen::Index r, c;
  out.value = I.maxCoeff(&r, &c);
  out.argmax_x = pts[r];
  out.argmax_xp = pts[c];
  out.modes = m * m;
  return out;
}

// ---------------------------------------------------------------- ▷ operator

TriangleSpace::TriangleSpace(BC bc, double L, double beta, int modes) : bc_(bc), L_(L), N_(modes) {
  require(modes >= 1 && modes <= 24, "TriangleSpace: modes must lie in [1, 24]");
  const int k0 = bc == BC::Dirichlet ? 1 : 0;
  const int J = 2 * (k0 + N_ - 1);
  // cosine products in the normalized Neumann basis ψ_j
  Eigen::MatrixXd Wc = riesz_mode_matrix(BC::Neumann, L, beta, J + 1);
  auto nrm = [&](int k) { return k == 0 ? 1 / std::sqrt(L) : std::sqrt(2 / L); };
  const double sg = bc == BC::Dirichlet ? -1.0 : 1.0;
  Eigen::MatrixXd Cf = Eigen::MatrixXd::Zero(N_ * N_, J + 1);
  for (int i = 0; i < N_; ++i)
    for (int j = 0; j < N_; ++j) {
      int k = k0 + i, p = k0 + j;
      double c = 0.5 * nrm(k) * nrm(p);
      Cf(i * N_ + j, std::abs(k - p)) += c / nrm(std::abs(k - p));
      Cf(i * N_ + j, k + p) += sg * c / nrm(k + p);
    }
  Eigen::MatrixXd R = Cf * Wc * Cf.transpose();  // [(k,p),(l,q)]
  W_.resize(N_ * N_, N_ * N_);
  for (int k = 0; k < N_; ++k)
    for (int l = 0; l < N_; ++l)
      for (int p = 0; p < N_; ++p)
        for (int q = 0; q < N_; ++q) W_(k * N_ + l, p * N_ + q) = R(k * N_ + p, l * N_ + q);
  mu_.resize(N_);
  for (int i = 0; i < N_; ++i) mu_(i) = std::pow((k0 + i) * kPi / L, 2);
}

ModalKernel TriangleSpace::g_tilde() const {
  Eigen::VectorXd lam(N_ * N_);
  for (int k = 0; k < N_; ++k)
    for (int l = 0; l < N_; ++l) lam(k * N_ + l) = mu_(k) + mu_(l);
  return [lam](double t) -> Eigen::MatrixXd { return (-lam.array() * t).exp().matrix().asDiagonal(); };
}

Eigen::VectorXd TriangleSpace::modes_at(double x) const {
  const int k0 = bc_ == BC::Dirichlet ? 1 : 0;
  Eigen::VectorXd v(N_);
  for (int i = 0; i < N_; ++i) v(i) = Spectrum::mode1d(bc_, k0 + i, L_, x);
  return v;
}

double TriangleSpace::eval(const Eigen::MatrixXd& K, const Point& x, const Point& xp, const Point& y,
                           const Point& yp) const {
  require(K.rows() == N_ * N_ && K.cols() == N_ * N_, "TriangleSpace::eval: kernel size mismatch");
  Eigen::VectorXd a = modes_at(x.at(0)), b = modes_at(xp.at(0)), c = modes_at(y.at(0)), d = modes_at(yp.at(0));
  Eigen::VectorXd u(N_ * N_), v(N_ * N_);
  for (int k = 0; k < N_; ++k)
    for (int l = 0; l < N_; ++l) {
      u(k * N_ + l) = a(k) * b(l);
      v(k * N_ + l) = c(k) * d(l);
    }
  return u.dot(K * v);
}

Eigen::MatrixXd triangle_op(const TriangleSpace& sp, const ModalKernel& k1, const ModalKernel& k2, double t,
                            const TriangleGrid& grid) {
  const int n = sp.modes() * sp.modes();
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(n, n);
  if (!(t > 0)) return out;
  require(grid.time_panels >= 1, "triangle_op: time_panels must be >= 1");
  const auto& gl = quad::gauss_legendre(grid.time_order);
  const double h = t / grid.time_panels;
  for (int p = 0; p < grid.time_panels; ++p)
    for (std::size_t i = 0; i < gl.x.size(); ++i) {
      double s = p * h + 0.5 * h * (gl.x[i] + 1);
      out.noalias() += (0.5 * h * gl.w[i]) * (k1(t - s) * (sp.coupling() * k2(s)));
    }
  return out;
}

// ---------------------------------------------------------------- Gaussian insertion

std::vector<std::complex<double>> gaussian_riesz_transform(double m, double sigma, double beta, double omega, int J) {
  require(sigma > 0, "gaussian_riesz_transform: sigma must be positive");
  require(beta > 0 && beta < 1, "gaussian_riesz_transform: beta must lie in (0, 1)");
  require(J >= 0, "gaussian_riesz_transform: J must be >= 0");
  std::vector<std::complex<double>> acc(J + 1, {0.0, 0.0});
  const double p = 1 / (1 - beta);
  const double K = 10;
  const double lo = m - K * sigma, hi = m + K * sigma;
  const auto& gl = quad::gauss_legendre(16);
  const double norm = 1 / (sigma * std::sqrt(2 * kPi));
  // y > 0 (side = 1) and y < 0 (side = -1), |y| = r^p
  for (int side : {1, -1}) {
    double a = side > 0 ? std::max(0.0, lo) : std::max(0.0, -hi);
    double b = side > 0 ? std::max(0.0, hi) : std::max(0.0, -lo);
    if (!(b > a)) continue;
    double ra = std::pow(a, 1 / p), rb = std::pow(b, 1 / p);
    int panels = 8 + int(std::ceil(2 * J * omega * (b - a) / kPi));
    double hr = (rb - ra) / panels;
    for (int q = 0; q < panels; ++q)
      for (std::size_t i = 0; i < gl.x.size(); ++i) {
        double r = ra + q * hr + 0.5 * hr * (gl.x[i] + 1);
        double y = side * std::pow(r, p);
        double w = y - m;
        double wt = 0.5 * hr * gl.w[i] * p * norm * std::exp(-0.5 * w * w / (sigma * sigma));
        std::complex<double> z = std::polar(1.0, omega * w), cur(wt, 0.0);
        for (int j = 0; j <= J; ++j) {
          acc[j] += cur;
          cur *= z;
        }
      }
  }
  return acc;
}

// ---------------------------------------------------------------- correlation series

namespace {

struct PointPair {
  double c1, c2, w;
};

class SeriesSweep {
 public:
  SeriesSweep(BC bc, double L, double beta, int N, int cells) : bc_(bc), L_(L), beta_(beta), N_(N) {
    k0_ = bc == BC::Dirichlet ? 1 : 0;
    a_.resize(N);
    n_.resize(N);
    mu_.resize(N);
    for (int i = 0; i < N; ++i) {
      int k = k0_ + i;
      a_(i) = k * kPi / L;
      n_(i) = k == 0 ? 1 / std::sqrt(L) : std::sqrt(2 / L);
      mu_(i) = a_(i) * a_(i);
    }
    NoiseGrid g = interval_grid(cells, L);
    C_ = build_covariance(g, beta);
    Phi_.resize(cells, N);
    for (int c = 0; c < cells; ++c) Phi_.row(c) = modes_at(g.center(c)[0]).transpose();
    P_ = g.h * Phi_.transpose();
  }

  int N() const { return N_; }
  const Eigen::VectorXd& mu() const { return mu_; }

  Eigen::VectorXd modes_at(double x) const {
    Eigen::VectorXd v(N_);
    for (int i = 0; i < N_; ++i) v(i) = Spectrum::mode1d(bc_, k0_ + i, L_, x);
    return v;
  }

  Eigen::MatrixXd insert(const Eigen::MatrixXd& A) const {
    Eigen::MatrixXd U = (Phi_ * A) * Phi_.transpose();
    U.array() *= C_.array();
    return (P_ * U) * P_.transpose();
  }

  // Level-one insertion of G(s,·,c1)G(s,·,c2) in free space.
  Eigen::MatrixXd insert_gauss(double s, const std::vector<PointPair>& pairs) const {
    Eigen::MatrixXd B = Eigen::MatrixXd::Zero(N_, N_);
    const int kmax = k0_ + N_ - 1;
    const double sg = bc_ == BC::Dirichlet ? -1.0 : 1.0;
    std::vector<double> gdiff(2 * kmax + 1);
    for (int j = 0; j <= 2 * kmax; ++j) {
      double q = j * kPi / L_;
      gdiff[j] = std::exp(-0.5 * q * q * s);
    }
    for (const auto& pr : pairs) {
      auto T = gaussian_riesz_transform(pr.c1 - pr.c2, std::sqrt(4 * s), beta_, kPi / (2 * L_), 2 * kmax);
      std::vector<std::complex<double>> e1(N_), e2(N_);
      for (int i = 0; i < N_; ++i) {
        e1[i] = std::polar(1.0, a_(i) * pr.c1);
        e2[i] = std::polar(1.0, a_(i) * pr.c2);
      }
      for (int i = 0; i < N_; ++i)
        for (int j = 0; j < N_; ++j) {
          int k = k0_ + i, l = k0_ + j;
          std::complex<double> Tm = k >= l ? T[k - l] : std::conj(T[l - k]);
          double v1 = (e1[i] * std::conj(e2[j]) * T[k + l]).real();
          double v2 = (e1[i] * e2[j] * Tm).real();
          B(i, j) += pr.w * n_(i) * n_(j) * 0.5 * (gdiff[std::abs(k - l)] * v1 + sg * gdiff[k + l] * v2);
        }
    }
    return B;
  }

  // Modal A_n(t), n = 1..n_max, started from A_0(0) = Σ w Φ(c1)Φ(c2)ᵀ for the
  // pairs plus `dense`. With pairs the level-one insertion is Gaussian up to s_g.
  std::vector<Eigen::MatrixXd> run(const std::vector<PointPair>& pairs, const Eigen::MatrixXd& dense,
                                   const std::vector<double>& nodes, int n_max, double s_g) const {
    Eigen::MatrixXd A0 = dense;
    for (const auto& pr : pairs) A0 += pr.w * modes_at(pr.c1) * modes_at(pr.c2).transpose();
    Eigen::MatrixXd Lam = mu_.replicate(1, N_) + mu_.transpose().replicate(N_, 1);
    std::vector<Eigen::MatrixXd> A(n_max + 1, Eigen::MatrixXd::Zero(N_, N_)), F(A), Fn(A);
    bool gauss = !pairs.empty();
    bool diag = false;
    for (const auto& pr : pairs) diag = diag || pr.c1 == pr.c2;
    auto level0 = [&](double s) -> Eigen::MatrixXd {
      Eigen::VectorXd d = (-mu_.array() * s).exp();
      return d.asDiagonal() * A0 * d.asDiagonal();
    };
    auto forcing = [&](double s, int n, const std::vector<Eigen::MatrixXd>& Acur) -> Eigen::MatrixXd {
      if (n == 1) return gauss && s <= s_g ? insert_gauss(s, pairs) : insert(level0(s));
      return insert(Acur[n - 1]);
    };
    if (!gauss) F[1] = insert(A0);  // finite at s = 0; higher levels vanish there
    Eigen::MatrixXd E, w0, w1;
    double lastd = -1;
    for (std::size_t j = 0; j + 1 < nodes.size(); ++j) {
      const double s1 = nodes[j + 1], d = s1 - nodes[j];
      if (d != lastd) {
        Eigen::ArrayXXd x = Lam.array() * d;
        E = (-x).exp().matrix();
        w0.resize(N_, N_);
        w1.resize(N_, N_);
        for (int p = 0; p < N_; ++p)
          for (int q = 0; q < N_; ++q) {
            double v = x(p, q);
            if (v < 1e-3) {
              w0(p, q) = 0.5 - v / 3 + v * v / 8 - v * v * v / 30;
              w1(p, q) = 0.5 - v / 6 + v * v / 24 - v * v * v / 120;
            } else {
              double em = std::exp(-v);
              w0(p, q) = (1 - em * (1 + v)) / (v * v);
              w1(p, q) = (v - 1 + em) / (v * v);
            }
          }
        lastd = d;
      }
      for (int n = 1; n <= n_max; ++n) {
        // A_{n-1} at s1 is already advanced
        Fn[n] = forcing(s1, n, A);
        if (j == 0 && gauss && n == 1) {
          // integrable power-law start of the level-one forcing
          A[1] = d * (diag ? 1 / (1 - beta_ / 2) : 1.0) * Fn[1];
        } else {
          A[n] = E.cwiseProduct(A[n]) + d * (w0.cwiseProduct(F[n]) + w1.cwiseProduct(Fn[n]));
        }
      }
      std::swap(F, Fn);
    }
    return std::vector<Eigen::MatrixXd>(A.begin() + 1, A.end());
  }

 private:
  BC bc_;
  double L_, beta_;
  int N_, k0_;
  Eigen::VectorXd a_, n_, mu_;
  Eigen::MatrixXd C_, Phi_, P_;
};

std::vector<double> series_nodes(double t, double s_min, double ratio, int steps) {
  std::vector<double> nodes{0.0};
  const double du = t / steps;
  for (double s = s_min * t; s < du * (1 - 1e-9); s *= ratio) nodes.push_back(s);
  for (int k = 1; k <= steps; ++k) {
    double s = k == steps ? t : k * du;
    if (s > nodes.back()) nodes.push_back(s);
  }
  return nodes;
}

// Largest s with free-space Gaussians accurate to about e^{-36} at the points.
double gauss_limit(double L, std::initializer_list<double> pts) {
  double d = INFINITY;
  for (double p : pts) d = std::min({d, p, L - p});
  return d * d / 144;
}

struct Level {
  int N, cells, steps;
  double ratio;
};

}  // namespace

std::vector<CorrSeriesResult> corr_series(const HeatKernel& hk, const InitialMeasure& nu, double beta, double lambda,
                                          double t, const std::vector<std::pair<Point, Point>>& tuples,
                                          const CorrSeriesConfig& cfg) {
  const Domain& D = hk.domain();
  require(D.kind() == Domain::Kind::Interval, "corr_series: Interval only");
  require(beta > 0 && beta < 1, "corr_series: beta must lie in (0, 1)");
  require(t > 0, "corr_series: t must be positive");
  require(cfg.n_max >= 1 && cfg.n_max <= 3, "corr_series: n_max must lie in [1, 3]");
  require(cfg.modes >= 16 && cfg.modes <= 1024, "corr_series: modes must lie in [16, 1024]");
  require(cfg.uniform_steps >= 8, "corr_series: uniform_steps must be >= 8");
  require(cfg.geometric_ratio > 1 && cfg.geometric_ratio < 2, "corr_series: geometric_ratio must lie in (1, 2)");
  require(cfg.s_min > 0 && cfg.s_min < 1e-3, "corr_series: s_min must lie in (0, 1e-3)");
  require(!nu.empty(), "corr_series: empty initial measure");
  nu.check_support(D);
  const double L = D.length();
  const BC bc = hk.bc();
  for (auto& tp : tuples) {
    require(tp.first.size() == 1 && tp.second.size() == 1, "corr_series: points must be 1d");
    require(D.contains(tp.first) && D.contains(tp.second), "corr_series: points must lie in the domain");
  }

  std::vector<CorrSeriesResult> out(tuples.size());
  for (std::size_t i = 0; i < tuples.size(); ++i) {
    auto& r = out[i];
    r.x = tuples[i].first;
    r.xp = tuples[i].second;
    QuadValue j1 = homogeneous_solution(hk, nu, t, r.x), j2 = homogeneous_solution(hk, nu, t, r.xp);
    if (!j1.finite || !j2.finite) throw NumericalError("corr_series: J diverges at a tuple point");
    r.terms = {j1.value * j2.value};
    r.value = r.terms[0];
  }
  if (lambda == 0) return out;

  const bool atomic = nu.densities().empty();
  std::vector<PointPair> fpairs;
  double s_g = INFINITY;
  for (const auto& a : nu.atoms())
    for (const auto& b : nu.atoms()) {
      fpairs.push_back({a.y0[0], b.y0[0], a.mass * b.mass});
      s_g = std::min(s_g, gauss_limit(L, {a.y0[0], b.y0[0]}));
    }
  if (!atomic) fpairs.clear();

  std::vector<Level> levels{{cfg.modes, cfg.cells > 0 ? cfg.cells : 2 * cfg.modes, cfg.uniform_steps,
                             cfg.geometric_ratio}};
  if (cfg.two_levels)
    levels.push_back({cfg.modes / 2, (cfg.cells > 0 ? cfg.cells : 2 * cfg.modes) / 2, cfg.uniform_steps / 2,
                      cfg.geometric_ratio * cfg.geometric_ratio});

  const double l2 = lambda * lambda;
  std::vector<std::vector<double>> sums(levels.size(), std::vector<double>(tuples.size()));
  Eigen::VectorXd nu_hat;
  for (std::size_t lv = 0; lv < levels.size(); ++lv) {
    const Level& Lv = levels[lv];
    SeriesSweep sw(bc, L, beta, Lv.N, Lv.cells);
    auto nodes = series_nodes(t, cfg.s_min, Lv.ratio, Lv.steps);
    // the grid insertion must resolve the level-zero kernel once s > s_g
    if (atomic && std::min(s_g, t) * sw.mu()(Lv.N - 1) < 20)
      throw NumericalError("corr_series: an atom is too close to the boundary for the mode count");
    Eigen::MatrixXd dense = Eigen::MatrixXd::Zero(Lv.N, Lv.N);
    if (!atomic) {
      SimGrid g = make_grid(D, Lv.cells);
      EigenStepper st(g, bc, Lv.N, t);
      Eigen::VectorXd c = st.project_measure(nu);
      dense = c * c.transpose();
    }
    auto A = sw.run(fpairs, dense, nodes, cfg.n_max, atomic ? s_g : 0.0);
    for (std::size_t i = 0; i < tuples.size(); ++i) {
      Eigen::VectorXd px = sw.modes_at(out[i].x[0]), pxp = sw.modes_at(out[i].xp[0]);
      double lp = 1, acc = out[i].terms[0];
      std::vector<double> terms{out[i].terms[0]};
      for (int n = 1; n <= cfg.n_max; ++n) {
        lp *= l2;
        double T = lp * px.dot(A[n - 1] * pxp);
        terms.push_back(T);
        acc += T;
      }
      sums[lv][i] = acc;
      if (lv == 0) {
        out[i].terms = terms;
        out[i].value = acc;
      }
    }
    if (lv == 0 && cfg.cross_check) {
      // resolvent form: sweep from δ_x ⊗ δ_x' and pair with ν ⊗ ν
      if (atomic) {
        nu_hat = Eigen::VectorXd::Zero(Lv.N);
        for (const auto& a : nu.atoms()) nu_hat += a.mass * sw.modes_at(a.y0[0]);
      } else {
        SimGrid g = make_grid(D, Lv.cells);
        EigenStepper st(g, bc, Lv.N, t);
        nu_hat = st.project_measure(nu);
      }
      for (std::size_t i = 0; i < tuples.size(); ++i) {
        double x = out[i].x[0], xp = out[i].xp[0];
        double sb = gauss_limit(L, {x, xp});
        if (std::min(sb, t) * sw.mu()(Lv.N - 1) < 20) continue;
        auto B = sw.run({{x, xp, 1.0}}, Eigen::MatrixXd::Zero(Lv.N, Lv.N), nodes, cfg.n_max, sb);
        double acc = out[i].terms[0], lp = 1;
        for (int n = 1; n <= cfg.n_max; ++n) {
          lp *= l2;
          acc += lp * nu_hat.dot(B[n - 1] * nu_hat);
        }
        out[i].resolvent_value = acc;
      }
    }
  }

  for (std::size_t i = 0; i < tuples.size(); ++i) {
    auto& r = out[i];
    if (levels.size() > 1) r.quad_error = std::abs(sums[0][i] - sums[1][i]);
    double last = r.terms.back(), prev = r.terms[r.terms.size() - 2];
    double ratio = prev != 0 ? std::abs(last / prev) : INFINITY;
    r.tail = ratio < 1 ? 2 * std::abs(last) * ratio / (1 - ratio) : INFINITY;
    r.converged = r.tail <= cfg.tail_tol * std::abs(r.value);
    if (!r.converged)
      throw NumericalError("corr_series: series tail " + std::to_string(r.tail) + " exceeds tolerance at n_max");
  }
  return out;
}

}  // namespace spde
