#include <doctest.h>

#include <boost/math/special_functions/gamma.hpp>
#include <boost/math/special_functions/hypergeometric_1F1.hpp>
#include <cmath>
#include <random>

#include "spde/error.hpp"
#include "spde/estimate.hpp"
#include "spde/quadrature.hpp"

using namespace spde;

namespace {

const double pi = 3.14159265358979323846;

// ∫_0^L g1(y) ∫_0^L g2(y') |y - y'|^{-β} dy' dy with the singular distance
// taken from the exact gaps of the inner rule.
template <class F1, class F2>
double riesz_pair(F1 g1, F2 g2, double L, double beta) {
  auto outer = [&](double y, double, double) {
    auto left = [&](double yp, double, double ghi) { return g2(yp) * std::pow(ghi, -beta); };
    auto right = [&](double yp, double glo, double) { return g2(yp) * std::pow(glo, -beta); };
    double v = 0;
    if (y > 0) v += quad::tanh_sinh(left, 0, y, 1e-13, 12).value;
    if (y < L) v += quad::tanh_sinh(right, y, L, 1e-13, 12).value;
    return g1(y) * v;
  };
  return quad::tanh_sinh(outer, 0, L, 1e-12, 12).value;
}

Ensemble constant_ensemble(const SimConfig& c, double value, long M) {
  Ensemble e;
  e.times = {c.t_end};
  e.points = make_grid(c.domain, c.n_space).centers;
  e.values = {Eigen::MatrixXd::Constant(M, long(e.points.size()), value)};
  for (long i = 0; i < M; ++i) e.kept.push_back(i);
  return e;
}

SimConfig small_config(BC bc, double lambda) {
  SimConfig c;
  c.bc = bc;
  c.lambda = lambda;
  c.initial = InitialMeasure::uniform(1.0);
  c.n_space = 32;
  c.dt = 1e-3;
  c.t_end = 0.05;
  c.trajectories = 2;
  return c;
}

}  // namespace

TEST_CASE("jackknife of a mean is std / sqrt(M)") {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> nd(1.0, 2.0);
  const long M = 500;
  Eigen::MatrixXd s(M, 1);
  for (long i = 0; i < M; ++i) s(i, 0) = nd(rng);
  auto [v, se] = jackknife(s, [](const Eigen::VectorXd& m) { return m(0); });
  double mean = s.mean();
  double sd = std::sqrt((s.array() - mean).square().sum() / double(M - 1));
  CHECK(std::abs(v - mean) < 1e-14);
  CHECK(std::abs(se - sd / std::sqrt(double(M))) < 1e-12 * se);
  // smooth stat: delta method agrees to leading order
  Eigen::MatrixXd sq = s.array().square().matrix();
  auto [r, rse] = jackknife(sq, [](const Eigen::VectorXd& m) { return std::sqrt(m(0)); });
  double m2 = sq.mean();
  double sd2 = std::sqrt((sq.array() - m2).square().sum() / double(M - 1));
  CHECK(std::abs(r - std::sqrt(m2)) < 1e-14);
  CHECK(std::abs(rse - sd2 / std::sqrt(double(M)) / (2 * std::sqrt(m2))) < 0.02 * rse);
  CHECK_THROWS_AS(jackknife(Eigen::MatrixXd(1, 1), [](const Eigen::VectorXd& m) { return m(0); }), ValidationError);
}

TEST_CASE("lyapunov fit") {
  std::vector<double> t, m, c;
  for (int i = 0; i <= 10; ++i) {
    t.push_back(0.1 * i);
    m.push_back(std::exp(-2 * pi * pi * t.back()));
    c.push_back(3.5);
  }
  auto f = lyapunov_fit(t, m, 0, 1);
  CHECK(std::abs(f.slope + 2 * pi * pi) < 1e-10);
  CHECK(f.points == 11);
  CHECK(f.ci_lo <= f.slope);
  CHECK(f.ci_hi >= f.slope);
  auto g = lyapunov_fit(t, c, 0, 1);
  CHECK(std::abs(g.slope) < 1e-14);
  auto w = lyapunov_fit(t, m, 0.2, 0.9, std::vector<double>(m.size(), 1e-3));
  CHECK(std::abs(w.slope + 2 * pi * pi) < 1e-9);
  CHECK(w.points == 8);
  CHECK_THROWS_AS(lyapunov_fit(t, m, 0, 0.3), ValidationError);
  m[3] = 0;
  CHECK_THROWS_AS(lyapunov_fit(t, m, 0, 1), ValidationError);
}

TEST_CASE("linear fit CI covers the truth at the nominal rate") {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> nd(0, 0.3);
  int cover = 0;
  const int R = 400;
  for (int r = 0; r < R; ++r) {
    std::vector<double> x, y;
    for (int i = 0; i < 8; ++i) {
      x.push_back(i);
      y.push_back(1.5 - 0.7 * i + nd(rng));
    }
    auto f = linear_fit(x, y);
    cover += f.ci_lo <= -0.7 && -0.7 <= f.ci_hi;
  }
  // 95% ± 4 binomial SE
  CHECK(std::abs(cover / double(R) - 0.95) < 4 * std::sqrt(0.95 * 0.05 / R));
}

TEST_CASE("trapezoid") {
  std::vector<double> x{0.25, 0.5, 0.75}, g{0.25, 0.5, 0.75};
  CHECK(std::abs(trapezoid_1d(x, g, 1.0, 0.0, 1.0) - 0.5) < 1e-15);
}

TEST_CASE("energy of constant fields") {
  auto c = small_config(BC::Neumann, 1.0);
  c.n_space = 8;
  auto e = constant_ensemble(c, 2.0, 3);
  auto E = l2_energy(e, c, c.t_end);
  CHECK(std::abs(E.value - 2) < 1e-14);
  CHECK(E.se == 0.0);
  auto e3 = constant_ensemble(c, 6.0, 3);
  CHECK(std::abs(l2_energy(e3, c, c.t_end).value - 3 * E.value) < 1e-13);
  c.bc = BC::Dirichlet;
  // zero boundary values: ∫ = 4 (1 - h/2)
  CHECK(std::abs(l2_energy(e, c, c.t_end).value - std::sqrt(4 * (1 - 0.0625))) < 1e-14);
  c.record_grid = false;
  CHECK_THROWS_AS(l2_energy(e, c, c.t_end), ValidationError);
}

TEST_CASE("energy at lambda = 0 is the norm of J") {
  auto c = small_config(BC::Dirichlet, 0.0);
  c.n_space = 64;
  auto e = run_ensemble(c);
  HeatKernel hk(c.domain, c.bc);
  std::vector<double> xs, g;
  for (auto& p : e.points) {
    xs.push_back(p[0]);
    double J = homogeneous_solution(hk, c.initial, c.t_end, p).value;
    g.push_back(J * J);
  }
  double ref = std::sqrt(trapezoid_1d(xs, g, 1.0, 0.0, 0.0));
  auto E = l2_energy(e, c, c.t_end);
  CHECK(std::abs(E.value - ref) < 1e-6 * ref);
  CHECK(E.se < 1e-12);
  auto m = pam_moments(c);
  CHECK(std::abs(l2_energy(m, c, 0) - E.value) < 1e-10);
  // weighted energy of J = e^{-π²t} sin(πx): ∫ J²/Φ₁² = e^{-2π²t}/2
  c.initial = InitialMeasure::sin_power(1.0, -1.0);
  auto e2 = run_ensemble(c);
  auto W = l2_energy(e2, c, c.t_end, true);
  CHECK(std::abs(W.value - std::exp(-pi * pi * c.t_end) / std::sqrt(2.0)) < 1e-6);
  c.bc = BC::Neumann;
  CHECK_THROWS_AS(l2_energy(e2, c, c.t_end, true), ValidationError);
}

TEST_CASE("excitation fit") {
  std::vector<double> lam{0.125, 0.25, 0.375, 0.5}, E, F;
  for (double l : lam) {
    E.push_back(std::exp(l * l));
    F.push_back(std::exp(1.0) * std::exp(std::pow(l, 2.5)));
  }
  CHECK(std::abs(excitation_fit(lam, E, ExcitationRegime::Zero).slope - 2) < 1e-12);
  CHECK(std::abs(excitation_fit(lam, F, ExcitationRegime::Infinity, std::exp(1.0)).slope - 2.5) < 1e-12);
  CHECK_THROWS_AS(excitation_fit({1, 2, 3}, {2, 3, 4}, ExcitationRegime::Zero), ValidationError);
  CHECK_THROWS_AS(excitation_fit(lam, {1, 2, 3, 4}, ExcitationRegime::Zero), NumericalError);
}

TEST_CASE("ensemble moments and correlations") {
  auto c = small_config(BC::Dirichlet, 1.0);
  c.trajectories = 200;
  c.probes = {{0.25}, {0.5}};
  auto e = run_ensemble(c);
  auto m2a = moment_estimate(e, 2, c.t_end, {0.25}), m2b = moment_estimate(e, 2, c.t_end, {0.5});
  auto r = corr_estimate(e, c.t_end, {0.25}, {0.5}), rs = corr_estimate(e, c.t_end, {0.5}, {0.25});
  CHECK(r.value == rs.value);
  CHECK(r.M == 200);
  // empirical Cauchy-Schwarz holds exactly
  CHECK(r.value * r.value <= m2a.value * m2b.value * (1 + 1e-12));
  auto d = corr_estimate(e, c.t_end, {0.5}, {0.5});
  CHECK(std::abs(d.value - m2b.value) < 1e-14 * m2b.value);
  CHECK(std::abs(d.se - m2b.se) < 1e-12 * m2b.se);
  CHECK_THROWS_AS(moment_estimate(e, 2, 0.3, {0.5}), ValidationError);
  CHECK_THROWS_AS(moment_estimate(e, 2, c.t_end, {0.33333}), ValidationError);
  // zero variance at λ = 0
  c.lambda = 0;
  auto z = run_ensemble(c);
  HeatKernel hk(c.domain, c.bc);
  double J = homogeneous_solution(hk, c.initial, c.t_end, {0.5}).value;
  auto mz = moment_estimate(z, 2, c.t_end, {0.5});
  CHECK(std::abs(mz.value - J * J) < 1e-5);
  CHECK(mz.se < 1e-14);
  auto mean = mean_estimate(z, c.t_end, {0.5});
  CHECK(std::abs(mean.value - J) < 1e-5);
}

TEST_CASE("riesz mode matrix against nested quadrature") {
  const double beta = 0.5, L = 1.3;
  for (BC bc : {BC::Dirichlet, BC::Neumann}) {
    auto W = riesz_mode_matrix(bc, L, beta, 5);
    const int k0 = bc == BC::Dirichlet ? 1 : 0;
    for (int i = 0; i < 5; ++i)
      for (int j = i; j < 5; ++j) {
        double ref = riesz_pair([&](double y) { return Spectrum::mode1d(bc, k0 + i, L, y); },
                                [&](double y) { return Spectrum::mode1d(bc, k0 + j, L, y); }, L, beta);
        INFO("bc=" << to_string(bc) << " i=" << i << " j=" << j);
        CHECK(std::abs(W(i, j) - ref) < 1e-9);
        CHECK(W(i, j) == W(j, i));
      }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(riesz_mode_matrix(bc, L, beta, 60));
    CHECK(es.eigenvalues().minCoeff() > -1e-12);
  }
  // constant mode: ∬ f / L
  auto W = riesz_mode_matrix(BC::Neumann, L, beta, 1);
  double ref = 2 * std::pow(L, 1 - beta) / ((1 - beta) * (2 - beta));
  CHECK(std::abs(W(0, 0) - ref) < 1e-13 * ref);
}

TEST_CASE("kO quadrature") {
  const double beta = 0.5;
  HeatKernel hn(Domain::interval(1.0), BC::Neumann), hd(Domain::interval(1.0), BC::Dirichlet);
  // long-time limit ∬ f over U² since G_N → 1
  CHECK(std::abs(kO_quadrature(hn, beta, 2.0).value - 8.0 / 3.0) < 1e-6);
  // direct double integral at the maximizer
  auto k = kO_quadrature(hd, beta, 0.05);
  CHECK(std::abs(k.argmax_x[0] - 0.5) < 1e-12);
  CHECK(std::abs(k.argmax_xp[0] - 0.5) < 1e-12);
  auto G = [&](double y) { return y <= 0 || y >= 1 ? 0.0 : hd(0.05, {0.5}, {y}); };
  double ref = riesz_pair(G, G, 1.0, beta);
  CHECK(std::abs(k.value - ref) < 1e-8 * ref);
  // large-t rate -2μ₁
  double s = std::log(kO_quadrature(hd, beta, 8).value / kO_quadrature(hd, beta, 2).value) / 6;
  CHECK(std::abs(s + 2 * pi * pi) < 1e-6 * 2 * pi * pi);
  // the ratio to e^{-2μ₁t}(1∧t)^{-β/2} stays within a fixed band on [1e-3, 10]
  double lo = INFINITY, hi = 0;
  for (int i = 0; i <= 12; ++i) {
    double t = std::pow(10.0, -3 + i / 3.0);
    double r = kO_quadrature(hd, beta, t).value / (std::exp(-2 * pi * pi * t) * std::pow(std::min(1.0, t), -beta / 2));
    lo = std::min(lo, r);
    hi = std::max(hi, r);
  }
  MESSAGE("kO envelope band " << lo << " .. " << hi);
  CHECK(lo > 0);
  CHECK(hi / lo < 10);
  // unit square, Neumann, long time: 4 ∫∫ (1-a)(1-b)(a²+b²)^{-β/2}
  HeatKernel hb(Domain::box(2, 1.0), BC::Neumann);
  auto inner = [&](double b, double, double) {
    auto f = [&](double a, double, double) { return (1 - a) * (1 - b) * std::pow(a * a + b * b, -beta / 2); };
    return quad::tanh_sinh(f, 0, 1, 1e-12, 12).value;
  };
  double sq = 4 * quad::tanh_sinh(inner, 0, 1, 1e-12, 12).value;
  CHECK(std::abs(kO_quadrature(hb, beta, 2.0).value - sq) < 1e-6 * sq);
}

TEST_CASE("triangle operator") {
  const double beta = 0.5;
  TriangleSpace sp(BC::Dirichlet, 1.0, beta, 3);
  // coupling entries against nested quadrature
  auto phi = [](int k, double y) { return Spectrum::mode1d(BC::Dirichlet, k, 1.0, y); };
  const int N = 3;
  for (auto [k, l, p, q] : std::vector<std::array<int, 4>>{{0, 0, 0, 0}, {0, 1, 2, 1}, {2, 2, 1, 0}}) {
    double ref = riesz_pair([&](double z) { return phi(k + 1, z) * phi(p + 1, z); },
                            [&](double z) { return phi(l + 1, z) * phi(q + 1, z); }, 1.0, beta);
    CHECK(std::abs(sp.coupling()(k * N + l, p * N + q) - ref) < 1e-9);
  }
  TriangleSpace sn(BC::Neumann, 1.0, beta, 3);
  auto psi = [](int k, double y) { return Spectrum::mode1d(BC::Neumann, k, 1.0, y); };
  double ref = riesz_pair([&](double z) { return psi(0, z) * psi(2, z); },
                          [&](double z) { return psi(1, z) * psi(1, z); }, 1.0, beta);
  CHECK(std::abs(sn.coupling()(0 * N + 1, 2 * N + 1) - ref) < 1e-9);

  TriangleSpace s6(BC::Dirichlet, 1.0, beta, 4);
  auto G = s6.g_tilde();
  const double t = 0.05;
  TriangleGrid tg;
  ModalKernel GG = [&](double s) { return triangle_op(s6, G, G, s, tg); };
  auto left = triangle_op(s6, GG, G, t, tg);
  auto right = triangle_op(s6, G, GG, t, tg);
  double a = s6.eval(left, {0.3}, {0.6}, {0.4}, {0.5}), b = s6.eval(right, {0.3}, {0.6}, {0.4}, {0.5});
  CHECK(a > 0);
  CHECK(std::abs(a - b) < 1e-6 * std::abs(a));
  ModalKernel zero = [](double) { return Eigen::MatrixXd::Zero(16, 16); };
  CHECK(triangle_op(s6, G, zero, t, tg).cwiseAbs().maxCoeff() == 0.0);
  CHECK(triangle_op(s6, G, G, 0.0, tg).cwiseAbs().maxCoeff() == 0.0);
  CHECK(triangle_op(s6, G, G, 1e-12, tg).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("gaussian riesz transform") {
  const double beta = 0.5, sigma = 0.1, omega = pi / 2;
  auto T = gaussian_riesz_transform(0.0, sigma, beta, omega, 40);
  const double a = (1 - beta) / 2;
  for (int j = 0; j <= 40; j += 5) {
    double R = j * omega;
    double ref = std::pow(sigma, -beta) * std::pow(2.0, -beta / 2) * boost::math::tgamma(a) / std::sqrt(pi) *
                 boost::math::hypergeometric_1F1(a, 0.5, -R * R * sigma * sigma / 2);
    CHECK(std::abs(T[j].real() - ref) < 1e-10 * std::abs(T[0].real()));
    CHECK(std::abs(T[j].imag()) < 1e-12 * std::abs(T[0].real()));
  }
  // off-center mean against a split quadrature in y = m + w
  const double m = 0.13;
  auto U = gaussian_riesz_transform(m, sigma, beta, omega, 30);
  for (int j : {0, 7, 30}) {
    double R = j * omega;
    auto part = [&](bool re) {
      auto f = [&](double y, double glo, double ghi) {
        double ay = y < 0 ? ghi : glo;  // distance to the break at 0
        double w = y - m;
        double g = std::exp(-0.5 * w * w / (sigma * sigma)) / (sigma * std::sqrt(2 * pi));
        return (re ? std::cos(R * w) : std::sin(R * w)) * std::pow(ay, -beta) * g;
      };
      return quad::tanh_sinh(f, m - 12 * sigma, 0, 1e-13, 12).value + quad::tanh_sinh(f, 0, m + 12 * sigma, 1e-13, 12).value;
    };
    CHECK(std::abs(U[j].real() - part(true)) < 1e-9);
    CHECK(std::abs(U[j].imag() - part(false)) < 1e-9);
  }
}

TEST_CASE("correlation series basics") {
  HeatKernel hd(Domain::interval(1.0), BC::Dirichlet);
  auto nu = InitialMeasure::atom({0.5});
  auto r0 = corr_series(hd, nu, 0.5, 0.0, 0.1, {{{0.4}, {0.6}}});
  double J1 = homogeneous_solution(hd, nu, 0.1, {0.4}).value, J2 = homogeneous_solution(hd, nu, 0.1, {0.6}).value;
  CHECK(r0[0].value == J1 * J2);
  CHECK(r0[0].terms.size() == 1);
  CHECK_THROWS_AS(corr_series(hd, nu, 0.5, 1.0, 0.1, {{{0.4}, {0.6}}}, CorrSeriesConfig{4}), ValidationError);
  CHECK_THROWS_AS(corr_series(hd, InitialMeasure::atom({0.01}), 0.5, 1.0, 0.1, {{{0.4}, {0.6}}}), NumericalError);
}

TEST_CASE("first series term against the modal time integral") {
  // Neumann with ν ≡ 1: J ≡ 1, so T_1 = Σ φ_k(x)φ_l(x') W_kl (1 - e^{-Λt})/Λ
  HeatKernel hn(Domain::interval(1.0), BC::Neumann);
  const double beta = 0.5, t = 0.1, lam = 0.1;
  CorrSeriesConfig cfg;
  cfg.modes = 64;
  cfg.n_max = 1;
  auto r = corr_series(hn, InitialMeasure::uniform(1.0), beta, lam, t, {{{0.3}, {0.7}}, {{0.5}, {0.5}}}, cfg);
  auto W = riesz_mode_matrix(BC::Neumann, 1.0, beta, 64);
  for (auto& x : r) {
    double ref = 0;
    for (int k = 0; k < 64; ++k)
      for (int l = 0; l < 64; ++l) {
        double L = pi * pi * (k * k + l * l);
        double f = L == 0 ? t : (1 - std::exp(-L * t)) / L;
        ref += Spectrum::mode1d(BC::Neumann, k, 1, x.x[0]) * Spectrum::mode1d(BC::Neumann, l, 1, x.xp[0]) * W(k, l) * f;
      }
    INFO("x=" << x.x[0] << " x'=" << x.xp[0] << " T1=" << x.terms[1] / (lam * lam) << " ref=" << ref);
    CHECK(std::abs(x.terms[0] - 1) < 1e-10);
    CHECK(std::abs(x.terms[1] / (lam * lam) - ref) < 2e-3 * ref);
    CHECK(std::abs(x.resolvent_value - x.value) < 2e-3 * (x.value - 1));
  }
}

TEST_CASE("correlation series pinned value") {
  // Interval(1), Dirichlet, β = 0.5, λ = 1, t = 0.1, ν = δ_{0.5}, (x, x') = (0.4, 0.6)
  HeatKernel hd(Domain::interval(1.0), BC::Dirichlet);
  auto r = corr_series(hd, InitialMeasure::atom({0.5}), 0.5, 1.0, 0.1, {{{0.4}, {0.6}}})[0];
  MESSAGE("value " << r.value << " quad_error " << r.quad_error << " tail " << r.tail << " resolvent "
                   << r.resolvent_value);
  CHECK(r.converged);
  CHECK(r.terms.size() == 4);
  for (std::size_t n = 1; n < r.terms.size(); ++n) CHECK(r.terms[n] > 0);
  CHECK(r.terms[2] < r.terms[1]);
  CHECK(r.terms[3] < r.terms[2]);
  // the two refinement levels agree within 1e-4
  CHECK(r.quad_error < 1e-4 * r.value);
  CHECK(std::abs(r.resolvent_value - r.value) < 3 * r.quad_error + 1e-6);
  CHECK(std::abs(r.value - 0.7210844114) < 1e-8);
}
