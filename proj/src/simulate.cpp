#include "spde/simulate.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <mutex>
#include <random>
#include <sstream>
#include <thread>

#include "spde/error.hpp"
#include "spde/quadrature.hpp"

namespace spde {

namespace {

constexpr int kBatch = 32;

bool is_anderson(const SigmaSpec& s) { return s.kind == SigmaSpec::Kind::Anderson; }

void apply_sigma(const SigmaSpec& sigma, const Eigen::MatrixXd& u, const Eigen::MatrixXd& dW, Eigen::MatrixXd& g) {
  if (is_anderson(sigma)) {
    g = u.cwiseProduct(dW);
    return;
  }
  g.resize(u.rows(), u.cols());
  for (Eigen::Index j = 0; j < u.cols(); ++j)
    for (Eigen::Index i = 0; i < u.rows(); ++i) g(i, j) = sigma(u(i, j)) * dW(i, j);
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// Per-axis interpolation weights at coordinate s (in cell units, centers at
// k + 0.5) with ghost cells folded back in.
std::vector<std::pair<int, double>> axis_weights(double s, int n, BC bc) {
  double p = s - 0.5;
  int i0 = int(std::floor(p));
  double w = p - i0;
  std::vector<std::pair<int, double>> out;
  auto add = [&](int i, double wt) {
    if (wt == 0) return;
    if (i < 0) {
      out.push_back({0, bc == BC::Dirichlet ? -wt : wt});
    } else if (i >= n) {
      out.push_back({n - 1, bc == BC::Dirichlet ? -wt : wt});
    } else {
      out.push_back({i, wt});
    }
  };
  add(i0, 1 - w);
  add(i0 + 1, w);
  return out;
}

}  // namespace

// ---------------------------------------------------------------- sigma

SigmaSpec SigmaSpec::anderson() { return SigmaSpec{}; }

SigmaSpec SigmaSpec::linear_cone(double l, double L) {
  require(l >= 0 && L >= l, "sigma: need 0 <= l <= L");
  SigmaSpec s;
  s.kind = Kind::LinearCone;
  s.l = l;
  s.L = L;
  return s;
}

SigmaSpec SigmaSpec::custom_fn(std::function<double(double)> f, double l, double L) {
  require(bool(f), "sigma: custom evaluator missing");
  require(l >= 0 && L >= l, "sigma: need 0 <= l <= L");
  SigmaSpec s;
  s.kind = Kind::Custom;
  s.custom = std::move(f);
  s.l = l;
  s.L = L;
  return s;
}

void SigmaSpec::validate(std::uint64_t seed) const {
  require(l >= 0 && L >= l, "sigma: need 0 <= l <= L");
  if (kind == Kind::Anderson) return;
  require((*this)(0.0) == 0.0, "sigma: sigma(0) must be 0");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> U(-10, 10);
  for (int i = 0; i < 1000; ++i) {
    double u = U(rng), v = U(rng);
    double su = (*this)(u), sv = (*this)(v);
    require(std::isfinite(su), "sigma: non-finite value");
    require(std::abs(su - sv) <= L * std::abs(u - v) * (1 + 1e-12) + 1e-300,
            "sigma: Lipschitz constant L violated");
    require(std::abs(su) <= L * std::abs(u) * (1 + 1e-12) && std::abs(su) >= l * std::abs(u) * (1 - 1e-12),
            "sigma: cone bounds l|u| <= |sigma(u)| <= L|u| violated");
  }
}

std::string SigmaSpec::name() const {
  switch (kind) {
    case Kind::Anderson: return "anderson";
    case Kind::LinearCone: return "linear_cone(" + fmt(l) + "," + fmt(L) + ")";
    default: return "custom(" + fmt(l) + "," + fmt(L) + ")";
  }
}

std::string to_string(Scheme s) { return s == Scheme::ExpEulerEigen ? "exp_euler_eigen" : "semi_implicit_fd"; }

Scheme parse_scheme(const std::string& s) {
  if (s == "exp_euler_eigen") return Scheme::ExpEulerEigen;
  if (s == "semi_implicit_fd") return Scheme::SemiImplicitFD;
  throw ValidationError("unknown scheme '" + s + "' (exp_euler_eigen | semi_implicit_fd)");
}

// ---------------------------------------------------------------- config

long SimConfig::steps() const { return std::lround(t_end / dt); }

std::vector<double> SimConfig::resolved_output_times() const {
  return output_times.empty() ? std::vector<double>{t_end} : output_times;
}

void SimConfig::validate() const {
  auto k = domain.kind();
  require(k != Domain::Kind::Product, "simulate: product domains are not supported");
  require(domain.dim() <= 2, "simulate: dimension must be 1 or 2");
  if (scheme == Scheme::ExpEulerEigen)
    require(k == Domain::Kind::Interval || k == Domain::Kind::Box,
            "simulate: exp_euler_eigen needs an Interval or Box domain");
  require(dt > 0 && std::isfinite(dt), "simulate: dt must be > 0");
  require(t_end > 0 && std::isfinite(t_end), "simulate: t_end must be > 0");
  require(std::abs(t_end / dt - double(steps())) <= 1e-8 * std::max(1.0, double(steps())),
          "simulate: t_end must be a multiple of dt");
  for (double t : resolved_output_times()) {
    require(t > 0 && t <= t_end * (1 + 1e-12), "simulate: output times must lie in (0, t_end]");
    require(std::abs(t / dt - std::round(t / dt)) <= 1e-8 * std::max(1.0, t / dt),
            "simulate: output times must be multiples of dt");
  }
  require(lambda >= 0 && std::isfinite(lambda), "simulate: lambda must be >= 0");
  require(beta > 0 && beta < std::min(2.0, double(domain.dim())), "simulate: beta must lie in (0, min(2,d))");
  require(n_space >= 2, "simulate: n_space must be >= 2");
  require(trajectories >= 1, "simulate: trajectories must be >= 1");
  require(!initial.empty(), "simulate: initial measure is empty");
  initial.check_support(domain);
  long cells = domain.dim() == 1 ? n_space : long(n_space) * n_space;
  require(modes == 0 || modes >= n_space, "simulate: spectrum truncation must be >= n_space");
  require(cells <= 4096, "simulate: at most 4096 cells (dense noise factor)");
  for (const auto& p : probes) require(domain.contains(p), "simulate: probe point outside the domain");
  sigma.validate();
}

std::string describe(const SimConfig& c) {
  std::ostringstream o;
  o << "domain=" << c.domain.name() << ";bc=" << to_string(c.bc) << ";sigma=" << c.sigma.name()
    << ";lambda=" << fmt(c.lambda) << ";beta=" << fmt(c.beta) << ";initial=";
  for (const auto& a : c.initial.atoms()) {
    o << "atom(";
    for (double v : a.y0) o << fmt(v) << ",";
    o << fmt(a.mass) << ")";
  }
  for (const auto& d : c.initial.densities()) o << "density(" << d.label << ")";
  o << ";n=" << c.n_space << ";dt=" << fmt(c.dt) << ";t_end=" << fmt(c.t_end) << ";M=" << c.trajectories
    << ";seed=" << c.seed << ";scheme=" << to_string(c.scheme) << ";modes=" << c.modes << ";outputs=";
  for (double t : c.resolved_output_times()) o << fmt(t) << ",";
  o << ";probes=";
  for (const auto& p : c.probes) {
    o << "(";
    for (double v : p) o << fmt(v) << ",";
    o << ")";
  }
  o << ";grid=" << c.record_grid;
  return o.str();
}

std::uint64_t config_hash(const SimConfig& c) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char ch : describe(c)) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  return h;
}

// ---------------------------------------------------------------- grid

long SimGrid::cell_at(int i, int j) const {
  if (i < 0 || i >= n) return -1;
  if (cells.dim == 2 && (j < 0 || j >= n)) return -1;
  return lookup[lattice_index(i, cells.dim == 2 ? j : 0)];
}

SimGrid make_grid(const Domain& D, int n) {
  require(n >= 2, "make_grid: n must be >= 2");
  require(D.kind() != Domain::Kind::Product && D.dim() <= 2, "make_grid: dimension 1 or 2, no products");
  SimGrid g;
  g.domain = D;
  g.n = n;
  Point lo = D.lower_corner(), hi = D.upper_corner();
  g.h = (hi[0] - lo[0]) / n;
  g.cells.dim = D.dim();
  g.cells.h = g.h;
  g.cells.origin = {lo[0], D.dim() == 2 ? lo[1] : 0.0};
  g.masked = D.kind() == Domain::Kind::Ball || D.kind() == Domain::Kind::Annulus;
  long total = D.dim() == 1 ? n : long(n) * n;
  g.lookup.assign(total, -1);
  for (int j = 0; j < (D.dim() == 2 ? n : 1); ++j)
    for (int i = 0; i < n; ++i) {
      Point c = {lo[0] + g.h * (i + 0.5)};
      if (D.dim() == 2) c.push_back(lo[1] + g.h * (j + 0.5));
      if (g.masked && !D.contains(c)) continue;
      g.lookup[g.lattice_index(i, j)] = long(g.centers.size());
      g.centers.push_back(c);
      g.cells.idx.push_back({i, j});
    }
  require(!g.centers.empty(), "make_grid: no cell centers inside the domain");
  return g;
}

// ---------------------------------------------------------------- initial data

namespace {

// ∫ over the cell of F(site) with exact boundary gaps on cells touching the
// boundary of an Interval/Box.
quad::Result cell_integral(const SimGrid& g, std::size_t c, const std::function<double(const Site&)>& F) {
  const Domain& D = g.domain;
  const int d = g.cells.dim;
  if (g.masked) {
    const auto& gl = quad::gauss_legendre(6);
    double s = 0;
    for (std::size_t a = 0; a < gl.x.size(); ++a)
      for (std::size_t b = 0; b < gl.x.size(); ++b) {
        Point p = {g.centers[c][0] + 0.5 * g.h * gl.x[a], g.centers[c][1] + 0.5 * g.h * gl.x[b]};
        if (!D.contains(p)) continue;
        s += 0.25 * g.h * g.h * gl.w[a] * gl.w[b] * F(make_site(D, p));
      }
    quad::Result r;
    r.value = s;
    r.divergent = !std::isfinite(s);
    return r;
  }
  const double L = D.kind() == Domain::Kind::Ball ? 2 * D.radius() : D.length();
  const double org = g.cells.origin[0];
  auto axis = [&](int i, double x, double glo, double ghi, double& lo, double& hi) {
    lo = i == 0 ? glo : x - org;
    hi = i == g.n - 1 ? ghi : L - (x - org);
  };
  if (d == 1) {
    int i = g.cells.idx[c][0];
    double a = org + g.h * i, b = a + g.h;
    auto f = [&](double x, double glo, double ghi) {
      Site s;
      s.x = {x};
      double lo, hi;
      axis(i, x, glo, ghi, lo, hi);
      if (D.kind() == Domain::Kind::Ball) {
        // gaps measured as |x| and R - |x|
        s.lo = {std::abs(x)};
        s.hi = {std::min(lo, hi)};
      } else {
        s.lo = {lo};
        s.hi = {hi};
      }
      return F(s);
    };
    return quad::tanh_sinh(f, a, b, 1e-10, 9);
  }
  int i = g.cells.idx[c][0], j = g.cells.idx[c][1];
  double a1 = org + g.h * i, a2 = g.cells.origin[1] + g.h * j;
  bool divergent = false;
  auto outer = [&](double x1, double glo1, double ghi1) {
    auto inner = [&](double x2, double glo2, double ghi2) {
      Site s;
      s.x = {x1, x2};
      double lo1, hi1, lo2, hi2;
      axis(i, x1, glo1, ghi1, lo1, hi1);
      lo2 = j == 0 ? glo2 : x2 - g.cells.origin[1];
      hi2 = j == g.n - 1 ? ghi2 : L - (x2 - g.cells.origin[1]);
      s.lo = {lo1, lo2};
      s.hi = {hi1, hi2};
      return F(s);
    };
    auto r = quad::tanh_sinh(inner, a2, a2 + g.h, 1e-10, 8);
    divergent = divergent || r.divergent;
    return r.value;
  };
  auto r = quad::tanh_sinh(outer, a1, a1 + g.h, 1e-10, 8);
  r.divergent = r.divergent || divergent;
  return r;
}

long containing_cell(const SimGrid& g, const Point& y) {
  // lower index on ties: a point on the face between k-1 and k goes to k-1
  auto coord = [&](double v, double o) {
    double s = (v - o) / g.h;
    long k = long(std::ceil(s)) - 1;
    return std::clamp(k, 0L, long(g.n) - 1);
  };
  int i = int(coord(y[0], g.cells.origin[0]));
  int j = g.cells.dim == 2 ? int(coord(y[1], g.cells.origin[1])) : 0;
  long c = g.cell_at(i, j);
  if (c >= 0) return c;
  // masked lattice: nearest kept cell
  double best = INFINITY;
  for (std::size_t k = 0; k < g.centers.size(); ++k) {
    double r = 0;
    for (std::size_t a = 0; a < y.size(); ++a) r += (g.centers[k][a] - y[a]) * (g.centers[k][a] - y[a]);
    if (r < best) best = r, c = long(k);
  }
  return c;
}

}  // namespace

std::vector<double> discretize_initial(const InitialMeasure& nu, const SimGrid& g, BC bc) {
  nu.check_support(g.domain);
  const std::size_t nc = g.centers.size();
  const double vol = std::pow(g.h, g.cells.dim);
  std::vector<double> u(nc, 0.0);
  for (const auto& a : nu.atoms()) u[containing_cell(g, a.y0)] += a.mass / vol;
  if (nu.densities().empty()) return u;
  std::unique_ptr<EigenPair> ep;
  auto dens = [&](const Site& s) { return nu.density_at(s); };
  for (std::size_t c = 0; c < nc; ++c) {
    auto r = cell_integral(g, c, dens);
    if (r.divergent || !std::isfinite(r.value)) {
      if (bc != BC::Dirichlet)
        throw NumericalError("discretize_initial: density not integrable over a boundary cell (Neumann)");
      if (!ep) ep = std::make_unique<EigenPair>(leading_eigenpair(g.domain, bc));
      double pc = ep->phi1(make_site(g.domain, g.centers[c]));
      auto weighted = [&](const Site& s) { return nu.density_at(s) * ep->phi1(s) / pc; };
      r = cell_integral(g, c, weighted);
      if (r.divergent || !std::isfinite(r.value))
        throw NumericalError("discretize_initial: density not integrable against the Dirichlet weight");
    }
    u[c] += r.value / vol;
  }
  return u;
}

// ---------------------------------------------------------------- eigen scheme

EigenStepper::EigenStepper(const SimGrid& g, BC bc, int modes, double dt)
    : grid_(g), bc_(bc), spec_(g.domain, bc, modes > 0 ? modes : int(g.centers.size())) {
  require(dt > 0, "EigenStepper: dt must be > 0");
  const int N = int(spec_.size());
  const long n = long(g.centers.size());
  mu_.resize(N);
  decay_.resize(N);
  for (int k = 0; k < N; ++k) {
    mu_(k) = spec_.mu(k);
    decay_(k) = std::exp(-mu_(k) * dt);
  }
  Phi_.resize(n, N);
  for (long i = 0; i < n; ++i)
    for (int k = 0; k < N; ++k) Phi_(i, k) = spec_.eval(k, g.centers[i]);
  P_ = std::pow(g.h, g.cells.dim) * Phi_.transpose();
}

Eigen::MatrixXd EigenStepper::eval_matrix(const std::vector<Point>& pts) const {
  Eigen::MatrixXd E(pts.size(), modes());
  for (std::size_t p = 0; p < pts.size(); ++p)
    for (int k = 0; k < modes(); ++k) E(p, k) = spec_.eval(k, pts[p]);
  return E;
}

Eigen::VectorXd EigenStepper::project_field(const Eigen::VectorXd& cells) const { return P_ * cells; }

Eigen::VectorXd EigenStepper::project_measure(const InitialMeasure& nu) const {
  nu.check_support(grid_.domain);
  Eigen::VectorXd c = Eigen::VectorXd::Zero(modes());
  for (const auto& a : nu.atoms())
    for (int k = 0; k < modes(); ++k) c(k) += a.mass * spec_.eval(k, a.y0);
  if (nu.densities().empty()) return c;
  if (grid_.cells.dim == 2) {
    // cell averages, then the discrete projection
    std::vector<InitialMeasure> parts;
    for (const auto& d : nu.densities()) parts.push_back(InitialMeasure::density(d.f, d.label, d.bounded));
    auto u = discretize_initial(InitialMeasure::sum(parts), grid_, bc_);
    c += P_ * Eigen::Map<Eigen::VectorXd>(u.data(), long(u.size()));
    return c;
  }
  // 1d: per cell and mode, gap-aware quadrature
  const double L = grid_.domain.length();
  for (std::size_t cell = 0; cell < grid_.centers.size(); ++cell) {
    int i = grid_.cells.idx[cell][0];
    double a = grid_.h * i, b = a + grid_.h;
    for (int k = 0; k < modes(); ++k) {
      int kk = spec_.modes()[k].k[0];
      auto f = [&](double x, double glo, double ghi) {
        Site s;
        s.x = {x};
        s.lo = {i == 0 ? glo : x};
        s.hi = {i == grid_.n - 1 ? ghi : L - x};
        // mode evaluated from the nearer end keeps sin(kπx/L) accurate
        double m = Spectrum::mode1d(bc_, kk, L, x);
        if (bc_ == BC::Dirichlet && s.lo[0] < 1e-3 * L)
          m = std::sqrt(2 / L) * std::sin(kk * M_PI * s.lo[0] / L);
        else if (bc_ == BC::Dirichlet && s.hi[0] < 1e-3 * L)
          m = std::sqrt(2 / L) * std::sin(kk * M_PI * s.hi[0] / L) * ((kk % 2) ? 1 : -1);
        return m * nu.density_at(s);
      };
      auto r = quad::tanh_sinh(f, a, b, 1e-11, 9);
      if (r.divergent || !std::isfinite(r.value))
        throw NumericalError("project_measure: initial density not integrable against the eigenbasis");
      c(k) += r.value;
    }
  }
  return c;
}

void EigenStepper::step(Eigen::MatrixXd& coef, const Eigen::MatrixXd& dW, double lambda,
                        const SigmaSpec& sigma) const {
  if (lambda != 0) {
    Eigen::MatrixXd u = Phi_ * coef, g;
    apply_sigma(sigma, u, dW, g);
    coef.noalias() += lambda * (P_ * g);
  }
  coef.array().colwise() *= decay_.array();
}

Eigen::VectorXd step_exp_euler_eigen(const EigenStepper& st, const Eigen::VectorXd& coef, const Eigen::VectorXd& dW,
                                     double lambda, const SigmaSpec& sigma) {
  Eigen::MatrixXd c = coef;
  st.step(c, dW, lambda, sigma);
  return c.col(0);
}

// ---------------------------------------------------------------- finite differences

Eigen::SparseMatrix<double> laplacian(const SimGrid& g, BC bc) {
  const long n = long(g.centers.size());
  const double ih2 = 1 / (g.h * g.h);
  std::vector<Eigen::Triplet<double>> T;
  for (long c = 0; c < n; ++c) {
    int i = g.cells.idx[c][0], j = g.cells.idx[c][1];
    double diag = 0;
    for (int ax = 0; ax < g.cells.dim; ++ax)
      for (int s = -1; s <= 1; s += 2) {
        long nb = ax == 0 ? g.cell_at(i + s, j) : g.cell_at(i, j + s);
        if (nb >= 0) {
          T.emplace_back(c, nb, ih2);
          diag -= ih2;
        } else if (bc == BC::Dirichlet) {
          diag -= 2 * ih2;
        }
      }
    T.emplace_back(c, c, diag);
  }
  Eigen::SparseMatrix<double> A(n, n);
  A.setFromTriplets(T.begin(), T.end());
  return A;
}

FDStepper::FDStepper(const SimGrid& g, BC bc, double dt) : grid_(g), bc_(bc) {
  require(dt > 0, "FDStepper: dt must be > 0");
  const long n = long(g.centers.size());
  Eigen::SparseMatrix<double> I(n, n);
  I.setIdentity();
  A_ = I - dt * laplacian(g, bc);
  ldlt_ = std::make_shared<Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>>>(A_);
  if (ldlt_->info() != Eigen::Success) throw NumericalError("FDStepper: sparse factorization failed");
}

void FDStepper::solve(Eigen::MatrixXd& rhs) const {
  rhs = ldlt_->solve(rhs);
  if (ldlt_->info() != Eigen::Success) throw NumericalError("FDStepper: solve failed");
}

void FDStepper::step(Eigen::MatrixXd& u, const Eigen::MatrixXd& dW, double lambda, const SigmaSpec& sigma) const {
  if (lambda != 0) {
    Eigen::MatrixXd g;
    apply_sigma(sigma, u, dW, g);
    u.noalias() += lambda * g;
  }
  solve(u);
}

Eigen::SparseMatrix<double> FDStepper::interp_matrix(const std::vector<Point>& pts) const {
  std::vector<Eigen::Triplet<double>> T;
  for (std::size_t p = 0; p < pts.size(); ++p) {
    const Point& x = pts[p];
    if (grid_.masked) {
      double best = INFINITY;
      long c = 0;
      for (std::size_t k = 0; k < grid_.centers.size(); ++k) {
        double r = std::hypot(grid_.centers[k][0] - x[0], grid_.centers[k][1] - x[1]);
        if (r < best) best = r, c = long(k);
      }
      T.emplace_back(long(p), c, 1.0);
      continue;
    }
    auto w1 = axis_weights((x[0] - grid_.cells.origin[0]) / grid_.h, grid_.n, bc_);
    if (grid_.cells.dim == 1) {
      for (auto [i, w] : w1) T.emplace_back(long(p), grid_.cell_at(i, 0), w);
      continue;
    }
    auto w2 = axis_weights((x[1] - grid_.cells.origin[1]) / grid_.h, grid_.n, bc_);
    for (auto [i, wi] : w1)
      for (auto [j, wj] : w2) T.emplace_back(long(p), grid_.cell_at(i, j), wi * wj);
  }
  Eigen::SparseMatrix<double> R(long(pts.size()), long(grid_.centers.size()));
  R.setFromTriplets(T.begin(), T.end());
  return R;
}

Eigen::VectorXd step_semi_implicit_fd(const FDStepper& st, const Eigen::VectorXd& u, const Eigen::VectorXd& dW,
                                      double lambda, const SigmaSpec& sigma) {
  Eigen::MatrixXd v = u;
  st.step(v, dW, lambda, sigma);
  return v.col(0);
}

// ---------------------------------------------------------------- ensembles

int thread_count() {
  if (const char* s = std::getenv("SPDE_THREADS")) {
    int v = std::atoi(s);
    if (v >= 1) return v;
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

std::size_t Ensemble::point_index(const Point& p, double tol) const {
  for (std::size_t i = 0; i < points.size(); ++i) {
    bool ok = points[i].size() == p.size();
    for (std::size_t a = 0; ok && a < p.size(); ++a) ok = std::abs(points[i][a] - p[a]) <= tol;
    if (ok) return i;
  }
  throw ValidationError("ensemble: point not on the output set");
}

std::size_t Ensemble::time_index(double t, double tol) const {
  for (std::size_t i = 0; i < times.size(); ++i)
    if (std::abs(times[i] - t) <= tol * std::max(1.0, std::abs(t))) return i;
  throw ValidationError("ensemble: time not on the output grid");
}

namespace {

struct Setup {
  SimGrid grid;
  NoiseFactor noise;
  std::unique_ptr<EigenStepper> eig;
  std::unique_ptr<FDStepper> fd;
  Eigen::VectorXd state0;
  Eigen::MatrixXd out_dense;               // eigen: points × modes
  Eigen::SparseMatrix<double> out_sparse;  // fd: points × cells
  std::vector<Point> points;
  std::vector<long> out_steps;
};

Setup prepare(const SimConfig& cfg, bool need_noise) {
  cfg.validate();
  Setup s;
  s.grid = make_grid(cfg.domain, cfg.n_space);
  if (need_noise) s.noise = factorize(build_covariance(s.grid.cells, cfg.beta));
  s.points = cfg.probes;
  if (cfg.record_grid) s.points.insert(s.points.end(), s.grid.centers.begin(), s.grid.centers.end());
  for (double t : cfg.resolved_output_times()) s.out_steps.push_back(std::lround(t / cfg.dt));
  if (cfg.scheme == Scheme::ExpEulerEigen) {
    s.eig = std::make_unique<EigenStepper>(s.grid, cfg.bc, cfg.modes, cfg.dt);
    s.state0 = s.eig->project_measure(cfg.initial);
    s.out_dense = s.eig->eval_matrix(s.points);
    if (cfg.record_grid)
      s.out_dense.bottomRows(long(s.grid.centers.size())) = s.eig->basis();
  } else {
    s.fd = std::make_unique<FDStepper>(s.grid, cfg.bc, cfg.dt);
    auto u = discretize_initial(cfg.initial, s.grid, cfg.bc);
    s.state0 = Eigen::Map<Eigen::VectorXd>(u.data(), long(u.size()));
    s.out_sparse = s.fd->interp_matrix(s.points);
  }
  return s;
}

}  // namespace

Ensemble run_ensemble(const SimConfig& cfg) {
  Setup S = prepare(cfg, cfg.lambda != 0);
  const long M = cfg.trajectories;
  const long steps = cfg.steps();
  const long nb = (M + kBatch - 1) / kBatch;
  const long ncell = long(S.grid.centers.size());
  const std::size_t nt = S.out_steps.size();
  const double sdt = std::sqrt(cfg.dt);

  Ensemble E;
  E.times = cfg.resolved_output_times();
  E.points = S.points;
  E.n_probes = cfg.probes.size();
  E.seed = cfg.seed;
  E.config_hash = config_hash(cfg);
  std::vector<Eigen::MatrixXd> vals(nt, Eigen::MatrixXd(M, long(S.points.size())));
  std::vector<char> ok(M, 1);
  std::vector<long> neg(nb, 0), cnt(nb, 0);

  auto run_batch = [&](long b) {
    Eigen::MatrixXd state = S.state0.replicate(1, kBatch);
    Eigen::MatrixXd Z(ncell, kBatch), dW, cells;
    std::size_t next = 0;
    for (long k = 1; k <= steps; ++k) {
      if (cfg.lambda != 0) {
        fill_normals(Z, cfg.seed, std::uint64_t(b) * kBatch, std::uint64_t(k - 1));
        dW.noalias() = sdt * (S.noise.factor * Z);
      } else {
        dW.setZero(ncell, kBatch);
      }
      if (S.eig)
        S.eig->step(state, dW, cfg.lambda, cfg.sigma);
      else
        S.fd->step(state, dW, cfg.lambda, cfg.sigma);
      while (next < nt && S.out_steps[next] == k) {
        Eigen::MatrixXd v = S.eig ? Eigen::MatrixXd(S.out_dense * state) : Eigen::MatrixXd(S.out_sparse * state);
        cells = S.eig ? S.eig->to_cells(state) : state;
        for (int j = 0; j < kBatch; ++j) {
          long m = b * kBatch + j;
          if (m >= M) break;
          vals[next].row(m) = v.col(j).transpose();
          for (long i = 0; i < ncell; ++i) {
            neg[b] += cells(i, j) < 0;
            ++cnt[b];
          }
        }
        ++next;
      }
    }
    for (int j = 0; j < kBatch; ++j) {
      long m = b * kBatch + j;
      if (m >= M) break;
      bool good = state.col(j).allFinite();
      for (std::size_t t = 0; good && t < nt; ++t) good = vals[t].row(m).allFinite();
      ok[m] = good;
    }
  };

  const int nthreads = int(std::min<long>(thread_count(), nb));
  std::atomic<long> next_batch{0};
  std::exception_ptr err;
  std::mutex err_mu;
  auto worker = [&] {
    try {
      for (long b; (b = next_batch.fetch_add(1)) < nb;) run_batch(b);
    } catch (...) {
      std::lock_guard<std::mutex> lock(err_mu);
      if (!err) err = std::current_exception();
      next_batch = nb;
    }
  };
  if (nthreads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int i = 0; i < nthreads; ++i) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (err) std::rethrow_exception(err);

  for (long m = 0; m < M; ++m)
    if (ok[m])
      E.kept.push_back(m);
    else
      ++E.rejected;
  if (double(E.rejected) > 1e-3 * double(M))
    throw NumericalError("run_ensemble: " + std::to_string(E.rejected) + " of " + std::to_string(M) +
                         " trajectories non-finite (limit 0.1%)");
  long negs = 0, total = 0;
  for (long b = 0; b < nb; ++b) negs += neg[b], total += cnt[b];
  E.negative_fraction = total ? double(negs) / double(total) : 0.0;
  E.values.resize(nt);
  for (std::size_t t = 0; t < nt; ++t) {
    if (E.rejected == 0) {
      E.values[t] = std::move(vals[t]);
      continue;
    }
    E.values[t].resize(long(E.kept.size()), long(S.points.size()));
    for (std::size_t r = 0; r < E.kept.size(); ++r) E.values[t].row(long(r)) = vals[t].row(E.kept[r]);
  }
  return E;
}

MomentSolution pam_moments(const SimConfig& cfg) {
  require(cfg.sigma.kind == SigmaSpec::Kind::Anderson, "pam_moments: Anderson sigma only");
  Setup S = prepare(cfg, true);
  const long steps = cfg.steps();
  const Eigen::MatrixXd& C = S.noise.cov;
  const double l2dt = cfg.lambda * cfg.lambda * cfg.dt;
  MomentSolution out;
  out.times = cfg.resolved_output_times();
  out.points = S.points;
  Eigen::VectorXd m = S.state0;
  Eigen::MatrixXd Q = m * m.transpose();
  std::size_t next = 0;
  double log_sc = 0;
  auto renormalize = [&] {
    double big = Q.cwiseAbs().maxCoeff();
    if (!std::isfinite(big)) throw NumericalError("pam_moments: second moments are not finite");
    if (big > 1e200) {
      Q /= big;
      log_sc += std::log(big);
    }
  };
  if (S.eig) {
    const auto& Phi = S.eig->basis();
    const auto& P = S.eig->projector();
    const auto& D = S.eig->decay();
    Eigen::MatrixXd U, X;
    for (long k = 1; k <= steps; ++k) {
      if (l2dt != 0) {
        U.noalias() = Phi * Q * Phi.transpose();
        X.noalias() = P * U.cwiseProduct(C) * P.transpose();
        Q.noalias() += l2dt * X;
      }
      Q = D.asDiagonal() * Q * D.asDiagonal();
      m = D.cwiseProduct(m);
      renormalize();
      while (next < out.times.size() && S.out_steps[next] == k) {
        out.mean.push_back(S.out_dense * m);
        out.second.push_back(S.out_dense * Q * S.out_dense.transpose());
        out.log_scale.push_back(log_sc);
        ++next;
      }
    }
  } else {
    const long n = long(S.grid.centers.size());
    Eigen::MatrixXd Ainv = Eigen::MatrixXd::Identity(n, n);
    S.fd->solve(Ainv);
    for (long k = 1; k <= steps; ++k) {
      if (l2dt != 0) Q += l2dt * Q.cwiseProduct(C);
      Q = Ainv * Q * Ainv.transpose();
      m = Ainv * m;
      renormalize();
      while (next < out.times.size() && S.out_steps[next] == k) {
        out.mean.push_back(S.out_sparse * m);
        out.second.push_back(S.out_sparse * Q * Eigen::MatrixXd(S.out_sparse.transpose()));
        out.log_scale.push_back(log_sc);
        ++next;
      }
    }
  }
  return out;
}

}  // namespace spde
