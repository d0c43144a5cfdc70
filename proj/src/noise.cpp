#include "spde/noise.hpp"

#include <cmath>
#include <map>
#include <mutex>
#include <numbers>

#include "spde/error.hpp"
#include "spde/quadrature.hpp"
#include "spde/rng.hpp"

namespace spde {

namespace {

double G1(double beta, double u) {
  return std::pow(std::abs(u), 2 - beta) / ((1 - beta) * (2 - beta));
}

// ∫_{-1}^{1} (1-|u|) |u + k|^{-β} du for |k| >= 2, where the integrand is smooth.
double tent_1d_far(double beta, double k) {
  const auto& gl = quad::gauss_legendre(20);
  double s = 0;
  for (int side = -1; side <= 1; side += 2)
    for (std::size_t i = 0; i < gl.x.size(); ++i) {
      double u = side * 0.5 * (1 + gl.x[i]);
      s += 0.5 * gl.w[i] * (1 - std::abs(u)) * std::pow(std::abs(u + k), -beta);
    }
  return s;
}

// ∫ over the unit quadrant Q_s = {s_i u_i ∈ [0,1]} of (1-|u1|)(1-|u2|)|u - p|^{-β},
// p a vertex of Q_s: polar coordinates about p over the two triangles cut by
// the diagonal through p, radial part exact.
double quadrant_polar(double beta, int s1, int s2, double p1, double p2) {
  const auto& gl = quad::gauss_legendre(40);
  // the vertices adjacent to p and the opposite one
  double q1 = (s1 > 0 ? 1.0 : -1.0), q2 = (s2 > 0 ? 1.0 : -1.0);
  double a1 = (p1 == 0 ? q1 : 0.0), a2 = p2;  // along axis 1
  double b1 = p1, b2 = (p2 == 0 ? q2 : 0.0);  // along axis 2
  double o1 = a1, o2 = b2;                    // opposite vertex
  double total = 0;
  for (int tri = 0; tri < 2; ++tri) {
    double e1 = tri == 0 ? a1 - p1 : b1 - p1, e2 = tri == 0 ? a2 - p2 : b2 - p2;
    double thA = std::atan2(e2, e1);
    double thQ = std::atan2(o2 - p2, o1 - p1);
    double lo = thA, hi = thQ;
    if (hi - lo > std::numbers::pi) hi -= 2 * std::numbers::pi;
    if (lo - hi > std::numbers::pi) hi += 2 * std::numbers::pi;
    double half = 0.5 * (hi - lo), mid = 0.5 * (hi + lo);
    for (std::size_t i = 0; i < gl.x.size(); ++i) {
      double th = mid + half * gl.x[i];
      double c = std::cos(th), s = std::sin(th);
      double R = 1 / std::cos(th - thA);
      double al1 = 1 - s1 * p1, al2 = 1 - s2 * p2;
      double A = al1 * al2, B = -(al1 * s2 * s + al2 * s1 * c), C = s1 * s2 * c * s;
      double rad = A * std::pow(R, 2 - beta) / (2 - beta) + B * std::pow(R, 3 - beta) / (3 - beta) +
                   C * std::pow(R, 4 - beta) / (4 - beta);
      total += std::abs(half) * gl.w[i] * rad;
    }
  }
  return total;
}

double quadrant_tensor(double beta, int s1, int s2, double k1, double k2) {
  const auto& gl = quad::gauss_legendre(24);
  double s = 0;
  for (std::size_t i = 0; i < gl.x.size(); ++i) {
    double u1 = s1 * 0.5 * (1 + gl.x[i]);
    for (std::size_t j = 0; j < gl.x.size(); ++j) {
      double u2 = s2 * 0.5 * (1 + gl.x[j]);
      double r = std::hypot(u1 + k1, u2 + k2);
      s += 0.25 * gl.w[i] * gl.w[j] * (1 - std::abs(u1)) * (1 - std::abs(u2)) * std::pow(r, -beta);
    }
  }
  return s;
}

}  // namespace

std::vector<double> NoiseGrid::center(std::size_t i) const {
  std::vector<double> c(dim);
  for (int a = 0; a < dim; ++a) c[a] = origin[a] + h * (idx[i][a] + 0.5);
  return c;
}

NoiseGrid interval_grid(int n, double L) {
  require(n >= 1 && L > 0, "interval_grid: need n >= 1 and L > 0");
  NoiseGrid g;
  g.dim = 1;
  g.h = L / n;
  for (int i = 0; i < n; ++i) g.idx.push_back({i, 0});
  return g;
}

NoiseGrid square_grid(int n, double L) {
  require(n >= 1 && L > 0, "square_grid: need n >= 1 and L > 0");
  NoiseGrid g;
  g.dim = 2;
  g.h = L / n;
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i) g.idx.push_back({i, j});
  return g;
}

double riesz_rect_1d(double beta, double a, double b, double c, double d) {
  require(beta > 0 && beta < 1, "riesz_rect_1d: beta must lie in (0,1)");
  return G1(beta, b - c) - G1(beta, a - c) - G1(beta, b - d) + G1(beta, a - d);
}

double riesz_cell_1d(double beta, long k) {
  require(beta > 0 && beta < 1, "noise: beta must lie in (0, min(2,d)) = (0,1) for d = 1");
  k = std::labs(k);
  if (k <= 8) return riesz_rect_1d(beta, 0, 1, double(k), double(k) + 1);
  return tent_1d_far(beta, double(k));
}

double riesz_cell_2d(double beta, long k1, long k2) {
  require(beta > 0 && beta < 2, "noise: beta must lie in (0,2) for d = 2");
  k1 = std::labs(k1);
  k2 = std::labs(k2);
  if (k1 < k2) std::swap(k1, k2);
  static std::mutex mu;
  static std::map<std::tuple<double, long, long>, double> cache;
  {
    std::lock_guard<std::mutex> lock(mu);
    auto it = cache.find({beta, k1, k2});
    if (it != cache.end()) return it->second;
  }
  // singular point of |u + k| sits at u = -k
  double p1 = -double(k1), p2 = -double(k2);
  double total = 0;
  for (int s1 = -1; s1 <= 1; s1 += 2)
    for (int s2 = -1; s2 <= 1; s2 += 2) {
      bool vertex = (p1 == 0 || p1 == s1) && (p2 == 0 || p2 == s2);
      total += vertex ? quadrant_polar(beta, s1, s2, p1, p2) : quadrant_tensor(beta, s1, s2, k1, k2);
    }
  std::lock_guard<std::mutex> lock(mu);
  cache[{beta, k1, k2}] = total;
  return total;
}

Eigen::MatrixXd build_covariance(const NoiseGrid& g, double beta) {
  require(g.h > 0 && g.size() >= 1, "build_covariance: empty grid");
  require(g.dim == 1 || g.dim == 2, "build_covariance: grids of dimension 1 or 2 only");
  require(beta > 0 && beta < std::min(2.0, double(g.dim)), "build_covariance: beta must lie in (0, min(2,d))");
  const std::size_t n = g.size();
  const double scale = std::pow(g.h, -beta);
  // offset table
  int span[2] = {0, 0};
  for (const auto& a : g.idx)
    for (int c = 0; c < g.dim; ++c) span[c] = std::max(span[c], std::abs(a[c] - g.idx[0][c]));
  int m0 = 0, m1 = 0;
  int lo[2] = {g.idx[0][0], g.idx[0][1]}, hi[2] = {lo[0], lo[1]};
  for (const auto& a : g.idx)
    for (int c = 0; c < 2; ++c) {
      lo[c] = std::min(lo[c], a[c]);
      hi[c] = std::max(hi[c], a[c]);
    }
  m0 = hi[0] - lo[0];
  m1 = hi[1] - lo[1];
  Eigen::MatrixXd table(m0 + 1, m1 + 1);
  for (int a = 0; a <= m0; ++a)
    for (int b = 0; b <= (g.dim == 2 ? m1 : 0); ++b)
      table(a, b) = scale * (g.dim == 1 ? riesz_cell_1d(beta, a) : riesz_cell_2d(beta, a, b));
  Eigen::MatrixXd C(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j <= i; ++j) {
      int a = std::abs(g.idx[i][0] - g.idx[j][0]);
      int b = g.dim == 2 ? std::abs(g.idx[i][1] - g.idx[j][1]) : 0;
      C(i, j) = C(j, i) = table(a, b);
    }
  return C;
}

NoiseFactor factorize(const Eigen::MatrixXd& cov, double clip_tol) {
  require(cov.rows() == cov.cols(), "factorize: matrix must be square");
  require((cov - cov.transpose()).cwiseAbs().maxCoeff() <= 1e-12 * std::max(1.0, cov.cwiseAbs().maxCoeff()),
          "factorize: matrix must be symmetric");
  NoiseFactor out;
  out.cov = cov;
  out.clip_tol = clip_tol;
  Eigen::LLT<Eigen::MatrixXd> llt(cov);
  if (llt.info() == Eigen::Success) {
    out.factor = llt.matrixL();
  } else {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
    if (es.info() != Eigen::Success) throw NumericalError("factorize: eigen-decomposition failed");
    Eigen::VectorXd ev = es.eigenvalues();
    double top = std::max(ev.maxCoeff(), 0.0);
    if (ev.minCoeff() < -clip_tol * std::max(top, 1.0))
      throw NumericalError("factorize: covariance indefinite beyond clip tolerance");
    for (Eigen::Index i = 0; i < ev.size(); ++i)
      if (ev(i) < 0) {
        out.clipped_mass += -ev(i);
        ev(i) = 0;
      }
    // V·√Λ squares to cov but is dense; QR of its transpose gives a
    // triangular factor with the same square
    Eigen::MatrixXd B = (es.eigenvectors() * ev.cwiseSqrt().asDiagonal()).transpose();
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(B);
    out.factor = qr.matrixQR().triangularView<Eigen::Upper>().toDenseMatrix().transpose();
    out.eigen_fallback = true;
  }
  out.reconstruction_error = (out.factor * out.factor.transpose() - cov).cwiseAbs().maxCoeff();
  return out;
}

void fill_normals(Eigen::MatrixXd& Z, std::uint64_t seed, std::uint64_t traj0, std::uint64_t step) {
  for (Eigen::Index j = 0; j < Z.cols(); ++j) {
    NormalStream s(seed, traj0 + std::uint64_t(j), step);
    for (Eigen::Index i = 0; i < Z.rows(); ++i) Z(i, j) = s.next();
  }
}

Eigen::VectorXd sample_increment(const NoiseFactor& f, double dt, std::uint64_t seed,
                                 std::uint64_t trajectory, std::uint64_t step) {
  require(dt >= 0, "sample_increment: dt must be >= 0");
  const auto n = f.factor.cols();
  if (dt == 0) return Eigen::VectorXd::Zero(f.factor.rows());
  Eigen::MatrixXd z(n, 1);
  fill_normals(z, seed, trajectory, step);
  return std::sqrt(dt) * (f.factor * z.col(0));
}

}  // namespace spde
