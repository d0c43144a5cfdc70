#include "spde/verify.hpp"

#include <unistd.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numbers>
#include <random>
#include <sstream>

#include "spde/error.hpp"
#include "spde/estimate.hpp"
#include "spde/heatkernel.hpp"
#include "spde/io.hpp"
#include "spde/quadrature.hpp"
#include "spde/renewal.hpp"
#include "spde/simulate.hpp"
#include "spde/spectral.hpp"

namespace spde {

namespace fs = std::filesystem;

namespace {

constexpr double pi = std::numbers::pi;

std::string num(double v, int prec = 4) {
  char b[64];
  std::snprintf(b, sizeof b, "%.*g", prec, v);
  return b;
}

// Sub-check collector: one criterion passes when every sub-check does.
class Checks {
 public:
  void add(bool ok, const std::string& what) {
    ++total_;
    if (!ok) {
      ++failed_;
      if (failed_ <= 6) fails_.push_back(what);
    }
  }
  void note(const std::string& s) { notes_.push_back(s); }
  bool pass() const { return failed_ == 0; }
  std::string detail() const {
    std::string out;
    for (const auto& n : notes_) out += (out.empty() ? "" : "; ") + n;
    if (failed_) {
      out += (out.empty() ? "" : "; ") + std::string("FAILED ") + std::to_string(failed_) + "/" +
             std::to_string(total_) + ":";
      for (const auto& f : fails_) out += " [" + f + "]";
    }
    return out;
  }

 private:
  int total_ = 0, failed_ = 0;
  std::vector<std::string> fails_, notes_;
};

double integrate01(const std::function<double(double)>& f) { return quad::composite_gl(f, 0, 1, 400, 12); }

SimConfig interval_sim(BC bc, double lambda, int n, double dt, double t_end, long M, std::uint64_t seed) {
  SimConfig c;
  c.domain = Domain::interval(1.0);
  c.bc = bc;
  c.lambda = lambda;
  c.beta = 0.5;
  c.n_space = n;
  c.dt = dt;
  c.t_end = t_end;
  c.trajectories = M;
  c.seed = seed;
  c.record_grid = false;
  return c;
}

// ---------------------------------------------------------------- 1

// ∫_{t > s1 > ... > sn > 0} (t-s1)^{r0} (s1-s2)^{r1} ... sn^{rn} by nested tanh-sinh.
double nested_beta(const std::vector<double>& r, double t) {
  const int n = int(r.size()) - 1;
  std::function<double(int, double)> F = [&](int k, double s) -> double {
    // F(k, s) = ∫_0^s (s-u)^{r_k} F(k+1, u) du, F(n, u) = u^{r_n}
    double tol = 1e-11 * std::pow(10.0, k);
    return quad::tanh_sinh(
               [&](double u, double lo, double hi) {
                 double inner = (k + 1 == n) ? std::pow(lo, r[n]) : F(k + 1, u);
                 return std::pow(hi, r[k]) * inner;
               },
               0, s, tol, 12)
        .value;
  };
  return F(0, t);
}

void criterion_identities(Checks& c) {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> U(0, 1);
  double worst = 0;
  for (int i = 0; i < 1000; ++i) {
    double t = 0.01 + 3 * U(rng), s = t * (0.01 + 0.98 * U(rng)), C = 0.1 + 2 * U(rng);
    std::vector<double> v = {2 * U(rng) - 1, 2 * U(rng) - 1}, w = {2 * U(rng) - 1, 2 * U(rng) - 1};
    worst = std::max(worst, exp_identity_residual(C, t, s, v, w));
  }
  c.note("exp identity worst residual " + num(worst));
  c.add(worst < 1e-12, "exp identity residual " + num(worst) + " >= 1e-12");

  std::uniform_real_distribution<double> R(-0.6, 1.0);
  double worst_beta = 0;
  for (int n = 1; n <= 3; ++n)
    for (int rep = 0; rep < 2; ++rep) {
      std::vector<double> r;
      for (int k = 0; k <= n; ++k) r.push_back(R(rng));
      double t = 0.5 + U(rng);
      double closed = beta_integral_closed(r, t), q = nested_beta(r, t);
      double rel = std::abs(closed - q) / std::abs(q);
      worst_beta = std::max(worst_beta, rel);
      c.add(rel < 1e-6, "beta identity n=" + std::to_string(n) + " rel " + num(rel));
    }
  c.note("beta identity worst rel " + num(worst_beta));

  double worst_ck = 0;
  for (BC bc : {BC::Dirichlet, BC::Neumann}) {
    HeatKernel hk(Domain::interval(1), bc);
    std::mt19937_64 g(11);
    for (int i = 0; i < 40; ++i) {
      double t = 0.005 + 0.5 * U(g), s = 0.005 + 0.5 * U(g), x = 0.01 + 0.98 * U(g), y = 0.01 + 0.98 * U(g);
      double lhs = integrate01([&](double z) {
        z = std::clamp(z, 1e-300, 1 - 1e-16);
        return hk(t, {x}, {z}) * hk(s, {z}, {y});
      });
      worst_ck = std::max(worst_ck, std::abs(lhs - hk(t + s, {x}, {y})));
    }
  }
  c.note("Chapman-Kolmogorov worst " + num(worst_ck));
  c.add(worst_ck < 1e-8, "Chapman-Kolmogorov " + num(worst_ck));

  HeatKernel hn(Domain::interval(1), BC::Neumann);
  double worst_mass = 0;
  for (double t : {0.001, 0.01, 0.1, 1.0})
    for (double x : {0.001, 0.05, 0.3, 0.5, 0.97}) {
      double m = integrate01([&](double y) { return hn(t, {x}, {std::clamp(y, 1e-300, 1.0 - 1e-16)}); });
      worst_mass = std::max(worst_mass, std::abs(m - 1));
    }
  c.note("Neumann mass worst " + num(worst_mass));
  c.add(worst_mass < 1e-8, "Neumann mass " + num(worst_mass));
}

// ---------------------------------------------------------------- 2

void criterion_series(Checks& c) {
  double tol = 1e-4;
  double worst_lo = INFINITY, worst_hi = -INFINITY;
  for (double rho : {0.25, 0.5, 0.75})
    for (double t : {0.1, 1.0, 5.0}) {
      auto h = hhat_all(rho, 6, t, 1e-6);
      for (int n = 1; n <= 6; ++n) {
        double hs = hstar_n_closed(rho, n, t);
        worst_hi = std::max(worst_hi, h[n] / hs);
        worst_lo = std::min(worst_lo, h[n] / (std::pow(2.0, -n) * hs));
        c.add(h[n] <= hs * (1 + tol), "hhat > h* at rho=" + num(rho) + " t=" + num(t) + " n=" + std::to_string(n));
        c.add(h[n] >= std::pow(2.0, -n) * hs * (1 - tol),
              "hhat < 2^-n h* at rho=" + num(rho) + " t=" + num(t) + " n=" + std::to_string(n));
      }
      for (int n = 1; n <= 3; ++n) {
        double ht = htilde_n(rho, n, t, 1e-6);
        c.add(ht >= std::pow(2.0, -n) * h[n] * (1 - tol),
              "htilde below at rho=" + num(rho) + " t=" + num(t) + " n=" + std::to_string(n));
        c.add(ht <= std::pow(2.0, (1 + rho) * n) * h[n] * (1 + tol),
              "htilde above at rho=" + num(rho) + " t=" + num(t) + " n=" + std::to_string(n));
      }
    }
  c.note("max hhat/h* " + num(worst_hi, 6) + ", min hhat/(2^-n h*) " + num(worst_lo, 6));
  bool mono = true;
  for (double rho : {0.25, 0.5, 0.75}) {
    std::vector<double> prev(7, 0.0);
    for (int i = 1; i <= 20; ++i) {
      auto v = hhat_all(rho, 6, 0.25 * i, 1e-6);
      for (int n = 1; n <= 6; ++n) {
        if (v[n] < prev[n]) mono = false;
        prev[n] = v[n];
      }
    }
  }
  c.add(mono, "hhat not monotone in t");
}

// ---------------------------------------------------------------- 3

void criterion_spectral(Checks& c) {
  auto ep = leading_eigenpair(Domain::interval(1), BC::Dirichlet);
  double e = std::abs(ep.mu1 - pi * pi);
  c.note("|mu1 - pi^2| " + num(e));
  c.add(e < 1e-12, "mu1 error " + num(e));
  auto z = first_bessel_zero(0);
  c.note("z0 " + num(z.z0, 12));
  c.add(z.z0 > 2.404825 && z.z0 < 2.404826, "z0 outside (2.404825, 2.404826)");
  c.add(std::abs(bessel_j(0, z.z0)) < 1e-12, "|J0(z0)| " + num(std::abs(bessel_j(0, z.z0))));
  double R1 = 1, R2 = 3, q = cross_product_zero(R1, R2);
  double z1 = std::abs(annulus_Z(R1, R1, R2, q)), z2 = std::abs(annulus_Z(R2, R1, R2, q));
  double wr = std::abs(annulus_Z_prime(R1, R1, q) / q - 2 / (pi * R1 * q));
  // one-sided fourth-order difference as an independent derivative
  double h = 1e-3;
  auto Z = [&](int k) { return annulus_Z(R1 + k * h, R1, R2, q); };
  double fd = (-25 * Z(0) + 48 * Z(1) - 36 * Z(2) + 16 * Z(3) - 3 * Z(4)) / (12 * h);
  double wr_fd = std::abs(fd / q - 2 / (pi * R1 * q));
  c.note("annulus |Z(R1)| " + num(z1) + " |Z(R2)| " + num(z2) + " Wronskian err " + num(wr) + " (fd " +
         num(wr_fd) + ")");
  c.add(z1 < 1e-9 && z2 < 1e-9, "annulus Z at the walls");
  c.add(wr < 1e-6 && wr_fd < 1e-6, "annulus Wronskian value");
}

// ---------------------------------------------------------------- 4

void criterion_kernel_rates(Checks& c) {
  HeatKernel hk(Domain::interval(1), BC::Dirichlet);
  const double beta = 0.5;
  std::vector<double> lx, ly;
  for (int i = 0; i <= 8; ++i) {
    double t = std::pow(10.0, -3 + 2.0 * i / 8);
    lx.push_back(std::log(t));
    ly.push_back(std::log(kO_quadrature(hk, beta, t).value));
  }
  SlopeFit s = linear_fit(lx, ly);
  double target = -beta / 2;
  c.note("small-t log-log slope on [1e-3,1e-1] " + num(s.slope) + " (target " + num(target) + " +-10%)");
  c.add(std::abs(s.slope - target) <= 0.1 * std::abs(target), "small-t slope " + num(s.slope));

  // diagnostics: local slopes show where the -beta/2 regime sets in
  auto local = [&](double a, double b) {
    return (std::log(kO_quadrature(hk, beta, b).value) - std::log(kO_quadrature(hk, beta, a).value)) /
           std::log(b / a);
  };
  c.note("local slopes [1e-5,1e-4] " + num(local(1e-5, 1e-4)) + ", [1e-3,1e-2] " + num(local(1e-3, 1e-2)) +
         ", [1e-2,1e-1] " + num(local(1e-2, 1e-1)));

  std::vector<double> tx, tyv;
  for (int i = 0; i <= 6; ++i) {
    double t = 2 + i;
    tx.push_back(t);
    tyv.push_back(std::log(kO_quadrature(hk, beta, t).value));
  }
  SlopeFit L = linear_fit(tx, tyv);
  double tl = -2 * pi * pi;
  c.note("large-t slope on [2,8] " + num(L.slope, 6) + " (target " + num(tl, 6) + " +-5%)");
  c.add(std::abs(L.slope - tl) <= 0.05 * std::abs(tl), "large-t slope " + num(L.slope));
}

// ---------------------------------------------------------------- 5

void criterion_pam_correlation(Checks& c) {
  const double t = 0.1;
  std::vector<std::pair<Point, Point>> tuples = {{{0.4}, {0.6}}, {{0.5}, {0.5}}, {{0.3}, {0.7}}};
  SimConfig cfg = interval_sim(BC::Dirichlet, 1.0, 128, 1e-4, t, 20000, 20240501);
  cfg.initial = InitialMeasure::atom({0.5});
  cfg.probes = {{0.3}, {0.4}, {0.5}, {0.6}, {0.7}};
  Ensemble e = run_ensemble(cfg);

  HeatKernel hk(Domain::interval(1), BC::Dirichlet);
  auto series = corr_series(hk, cfg.initial, 0.5, 1.0, t, tuples);
  for (std::size_t i = 0; i < tuples.size(); ++i) {
    const auto& [x, xp] = tuples[i];
    MomentEstimate mc = corr_estimate(e, t, x, xp);
    const auto& s = series[i];
    double tol = 3 * (mc.se + s.tail + s.quad_error);
    double diff = std::abs(mc.value - s.value);
    c.note("(" + num(x[0]) + "," + num(xp[0]) + "): MC " + num(mc.value, 6) + " +- " + num(mc.se, 3) + ", series " +
           num(s.value, 8) + " (tail " + num(s.tail, 2) + ", resolvent " + num(s.resolvent_value, 8) + "), |diff| " +
           num(diff, 3) + " <= " + num(tol, 3));
    c.add(diff <= tol, "tuple (" + num(x[0]) + "," + num(xp[0]) + ") diff " + num(diff) + " > " + num(tol));
    c.add(s.converged, "series not converged");
  }
  c.note("M=" + std::to_string(e.size()) + " rejected " + std::to_string(e.rejected));
}

// ---------------------------------------------------------------- 6

void criterion_mean(Checks& c) {
  for (BC bc : {BC::Dirichlet, BC::Neumann}) {
    SimConfig cfg = interval_sim(bc, 1.0, 64, 1e-3, 0.5, 4000, 77);
    cfg.initial = InitialMeasure::sum({InitialMeasure::atom({0.35}), InitialMeasure::uniform(0.5)});
    cfg.output_times = {0.02, 0.05, 0.1, 0.2, 0.5};
    for (int i = 1; i <= 9; ++i) cfg.probes.push_back({0.1 * i});
    Ensemble e = run_ensemble(cfg);
    HeatKernel hk(Domain::interval(1), bc);
    double worst = 0;
    for (double t : cfg.output_times)
      for (const auto& x : cfg.probes) {
        MomentEstimate m = mean_estimate(e, t, x);
        double J = homogeneous_solution(hk, cfg.initial, t, x).value;
        double z = std::abs(m.value - J) / m.se;
        worst = std::max(worst, z);
        c.add(z < 4, to_string(bc) + " t=" + num(t) + " x=" + num(x[0]) + " |mean-J|/SE " + num(z));
      }
    c.note(to_string(bc) + ": worst |mean-J|/SE over 45 points " + num(worst));
  }
}

// ---------------------------------------------------------------- 7

SlopeFit second_moment_slope(BC bc, double lambda, Checks& c) {
  SimConfig cfg = interval_sim(bc, lambda, 32, 1e-3, 5.0, 2000, 4242);
  cfg.initial = InitialMeasure::uniform(1.0);
  for (int i = 0; i <= 16; ++i) cfg.output_times.push_back(1.0 + 0.25 * i);
  cfg.probes = {{0.5}};
  Ensemble e = run_ensemble(cfg);
  std::vector<double> ts, m, se;
  for (double t : cfg.output_times) {
    MomentEstimate q = moment_estimate(e, 2.0, t, {0.5});
    ts.push_back(t);
    m.push_back(q.value);
    se.push_back(q.se);
  }
  SlopeFit f = lyapunov_fit(ts, m, 1.0, 5.0, se);
  c.note(to_string(bc) + " lambda=" + num(lambda) + ": slope " + num(f.slope, 5) + " CI [" + num(f.ci_lo, 5) + ", " +
         num(f.ci_hi, 5) + "]");
  return f;
}

void criterion_intermittency(Checks& c) {
  SlopeFit n = second_moment_slope(BC::Neumann, 0.5, c);
  c.add(n.slope > 0 && n.ci_lo > 0, "Neumann slope CI does not exclude 0");
  SlopeFit d = second_moment_slope(BC::Dirichlet, 0.05, c);
  double target = -2 * pi * pi;
  c.note("Dirichlet target " + num(target, 5) + " +-20%");
  c.add(std::abs(d.slope - target) <= 0.2 * std::abs(target), "Dirichlet slope " + num(d.slope));
}

// ---------------------------------------------------------------- 8

void criterion_boundary(Checks& c) {
  const double t = 0.5;
  SimConfig cfg = interval_sim(BC::Dirichlet, 1.0, 128, 1e-4, t, 1, 0);
  cfg.initial = InitialMeasure::uniform(1.0);
  std::vector<double> xs = {0.02, 0.1, 0.25, 0.5};
  for (double x : xs) cfg.probes.push_back({x});
  MomentSolution ms = pam_moments(cfg);
  const Domain& D = cfg.domain;
  auto ep = leading_eigenpair(D, BC::Dirichlet);
  const double cg = 0.25;  // Gaussian rate of the free heat kernel
  std::vector<double> ratio, m2;
  std::string row;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    double v = ms.second[0](long(i), long(i)) * std::exp(ms.log_scale[0]);
    double psi = Psi(ep, t, make_site(D, {xs[i]}));
    double js = J_c_star(D, ep, cfg.initial, cg, t, {xs[i]}).value;
    m2.push_back(v);
    ratio.push_back(v / (psi * psi * js * js));
    row += (row.empty() ? "" : ", ") + num(xs[i]) + ": m2 " + num(v) + " ratio " + num(ratio.back());
  }
  double spread = *std::max_element(ratio.begin(), ratio.end()) / *std::min_element(ratio.begin(), ratio.end());
  c.note(row);
  c.note("ratio spread " + num(spread) + " (< 10), m2(0.5)/m2(0.02) " + num(m2[3] / m2[0]) + " (>= 10)");
  c.add(spread < 10, "envelope ratio spread " + num(spread));
  c.add(m2[0] * 10 <= m2[3], "boundary suppression " + num(m2[3] / m2[0]));
}

// ---------------------------------------------------------------- 9

void criterion_excitation(Checks& c) {
  auto energies = [&](const std::vector<double>& lams) {
    std::vector<double> out;
    for (double lam : lams) {
      SimConfig cfg = interval_sim(BC::Neumann, lam, 64, 2e-5, 1.0, 1, 0);
      cfg.initial = InitialMeasure::uniform(1.0);
      cfg.record_grid = true;
      MomentSolution ms = pam_moments(cfg);
      out.push_back(log_l2_energy(ms, cfg, 0));
    }
    return out;
  };
  auto grid = [](double a) {
    std::vector<double> v;
    for (int i = 0; i <= 4; ++i) v.push_back(a * std::pow(2.0, 0.5 * i));
    return v;
  };
  std::vector<double> small = grid(0.125), large = grid(4.0);
  SlopeFit s = excitation_fit_log(small, energies(small), ExcitationRegime::Zero);
  SlopeFit l = excitation_fit_log(large, energies(large), ExcitationRegime::Infinity);
  c.note("small-lambda slope " + num(s.slope, 5) + " in [1.5, 2.6] (limit 2)");
  c.note("large-lambda slope " + num(l.slope, 5) + " in [2, 3.4] (limit " + num(4 / 1.5, 4) + ")");
  c.add(s.slope >= 1.5 && s.slope <= 2.6, "small-lambda slope " + num(s.slope));
  c.add(l.slope >= 2 && l.slope <= 3.4, "large-lambda slope " + num(l.slope));
}

// ---------------------------------------------------------------- 10

std::string quote(const std::string& s) {
  std::string o = "'";
  for (char ch : s) {
    if (ch == '\'')
      o += "'\\''";
    else
      o += ch;
  }
  return o + "'";
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream o;
  o << in.rdbuf();
  return o.str();
}

void criterion_determinism(Checks& c, const VerifyOptions& opt, const fs::path& scratch) {
  if (opt.spde_exe.empty() || !fs::exists(opt.spde_exe)) {
    c.add(false, "spde executable not found ('" + opt.spde_exe + "')");
    return;
  }
  fs::path dir = scratch / "determinism";
  fs::remove_all(dir);
  fs::create_directories(dir);
  json cfg = {{"schema", "spde.simulate/1"},
              {"domain", {{"kind", "Interval"}, {"L", 1.0}}},
              {"bc", "dirichlet"},
              {"sigma", {{"kind", "anderson"}}},
              {"lambda", 1.0},
              {"beta", 0.5},
              {"initial", {{"kind", "atom"}, {"y0", {0.5}}}},
              {"n_space", 32},
              {"dt", 1e-3},
              {"t_end", 0.05},
              {"output_times", {0.01, 0.05}},
              {"trajectories", 300},
              {"seed", 31337},
              {"probes", {{0.25}, {0.5}}},
              {"write_raw", true}};
  std::ofstream(dir / "config.json") << cfg.dump(2) << "\n";
  struct Run {
    std::string name;
    int threads;
  };
  std::vector<Run> runs = {{"a", 1}, {"b", 1}, {"c", 2}};
  for (const auto& r : runs) {
    std::string cmd = "SPDE_THREADS=" + std::to_string(r.threads) + " " + quote(opt.spde_exe) +
                      " simulate --config " + quote((dir / "config.json").string()) + " --out " +
                      quote((dir / r.name).string()) + " > " + quote((dir / (r.name + ".log")).string()) + " 2>&1";
    int rc = std::system(cmd.c_str());
    c.add(rc == 0, "spde simulate run " + r.name + " exited " + std::to_string(rc) + ": " +
                       slurp(dir / (r.name + ".log")).substr(0, 200));
    if (rc != 0) return;
  }
  auto compare = [&](const std::string& a, const std::string& b) {
    int files = 0;
    for (const auto& entry : fs::directory_iterator(dir / a)) {
      std::string name = entry.path().filename().string();
      fs::path other = dir / b / name;
      if (name == "metadata.json") {
        json ma = read_json_file(entry.path().string()), mb = read_json_file(other.string());
        for (auto* m : {&ma, &mb}) {
          m->erase("created");
          m->erase("threads");
        }
        c.add(ma == mb, "metadata differs between " + a + " and " + b);
        continue;
      }
      ++files;
      c.add(fs::exists(other) && slurp(entry.path()) == slurp(other), name + " differs between " + a + " and " + b);
    }
    return files;
  };
  int n = compare("a", "b");
  compare("a", "c");
  c.note(std::to_string(n) + " numeric files byte-identical across two runs and across 1 vs 2 threads");
  c.add(n >= 3, "expected at least 3 numeric files");
}

struct Budget {
  const char* name;
  double budget;
};

const Budget kBudgets[kCriterionCount] = {
    {"identity suite", 60},        {"series suite", 120},          {"spectral suite", 60},
    {"kernel-rate suite", 300},    {"PAM correlation equality", 600}, {"mean identity", 300},
    {"intermittency signs", 900},  {"boundary factor", 300},       {"excitation-index bracket", 1800},
    {"determinism", 0}};

fs::path scratch_root(const VerifyOptions& opt) {
  if (!opt.scratch_dir.empty()) return opt.scratch_dir;
  return fs::temp_directory_path() / ("spde_verify_" + std::to_string(::getpid()));
}

template <class F>
CheckResult timed(int id, const std::string& name, double budget, F&& body) {
  CheckResult r;
  r.id = id;
  r.name = name;
  r.budget = budget;
  Checks c;
  auto t0 = std::chrono::steady_clock::now();
  try {
    body(c);
  } catch (const std::exception& e) {
    c.add(false, std::string("exception: ") + e.what());
  }
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (budget > 0) c.add(r.seconds <= budget, "took " + num(r.seconds) + " s, budget " + num(budget) + " s");
  r.pass = c.pass();
  r.detail = c.detail();
  return r;
}

}  // namespace

CheckResult run_criterion(int id, const VerifyOptions& opt) {
  require(id >= 1 && id <= kCriterionCount, "verify: criterion must be 1.." + std::to_string(kCriterionCount));
  const Budget& s = kBudgets[id - 1];
  return timed(id, s.name, s.budget, [&](Checks& c) {
    switch (id) {
      case 1: criterion_identities(c); break;
      case 2: criterion_series(c); break;
      case 3: criterion_spectral(c); break;
      case 4: criterion_kernel_rates(c); break;
      case 5: criterion_pam_correlation(c); break;
      case 6: criterion_mean(c); break;
      case 7: criterion_intermittency(c); break;
      case 8: criterion_boundary(c); break;
      case 9: criterion_excitation(c); break;
      default: {
        fs::path root = scratch_root(opt);
        criterion_determinism(c, opt, root);
        if (opt.scratch_dir.empty()) fs::remove_all(root);
      }
    }
  });
}

std::vector<CheckResult> run_fast_suite(const VerifyOptions&) {
  std::vector<CheckResult> out;
  auto add = [&](const std::string& name, const std::function<void(Checks&)>& f) {
    out.push_back(timed(0, name, 0, f));
  };
  add("mu1 of Interval(1) is pi^2", [](Checks& c) {
    double mu = leading_eigenpair(Domain::interval(1), BC::Dirichlet).mu1;
    c.add(std::abs(mu - pi * pi) < 1e-12, "mu1 " + num(mu, 15));
  });
  add("Neumann kernel conserves mass", [](Checks& c) {
    HeatKernel hk(Domain::interval(1), BC::Neumann);
    for (double t : {0.01, 0.5}) c.add(std::abs(hk.cell_integral_1d(t, 0.3, 0, 1) - 1) < 1e-12, "t=" + num(t));
  });
  add("renewal series base cases", [](Checks& c) {
    c.add(hhat_n(0.5, 0, 3) == 1.0, "hhat_0");
    c.add(std::abs(hhat_n(0.5, 1, 4.0) - 5.0) < 1e-7, "hhat_1(4)");
    c.add(exp_identity_residual(1.0, 1.0, 0.5, {0.0}, {0.0}) == 0.0, "exp identity at 0");
  });
  add("lambda = 0 run is deterministic and equals J", [](Checks& c) {
    SimConfig cfg = interval_sim(BC::Dirichlet, 0.0, 32, 1e-3, 0.05, 16, 1);
    cfg.initial = InitialMeasure::atom({0.5});
    cfg.probes = {{0.3}};
    Ensemble e = run_ensemble(cfg);
    HeatKernel hk(Domain::interval(1), BC::Dirichlet);
    double J = homogeneous_solution(hk, cfg.initial, 0.05, {0.3}).value;
    MomentEstimate m = mean_estimate(e, 0.05, {0.3});
    c.add(m.se == 0.0, "nonzero spread at lambda=0");
    c.add(std::abs(m.value - J) < 1e-8 * J, "mean " + num(m.value, 12) + " vs J " + num(J, 12));
  });
  add("Neumann kO tends to the double integral of f", [](Checks& c) {
    HeatKernel hk(Domain::interval(1), BC::Neumann);
    double v = kO_quadrature(hk, 0.5, 2.0).value;
    c.add(std::abs(v - 8.0 / 3.0) < 1e-6, "kO(2) " + num(v, 10));
  });
  add("jackknife of a mean is std/sqrt(M)", [](Checks& c) {
    Eigen::MatrixXd s(5, 1);
    s << 1, 2, 4, 8, 16;
    auto [v, se] = jackknife(s, [](const Eigen::VectorXd& m) { return m[0]; });
    double sd = std::sqrt(((s.array() - 6.2).square().sum()) / 4.0);
    c.add(std::abs(v - 6.2) < 1e-12 && std::abs(se - sd / std::sqrt(5.0)) < 1e-12, "jackknife");
  });
  add("zero kernel gives a zero triangle", [](Checks& c) {
    TriangleSpace sp(BC::Dirichlet, 1.0, 0.5, 3);
    ModalKernel zero = [&](double) { return Eigen::MatrixXd::Zero(9, 9).eval(); };
    c.add(triangle_op(sp, sp.g_tilde(), zero, 0.3).norm() == 0.0, "nonzero");
  });
  add("config echo re-parses to itself", [](Checks& c) {
    json j = {{"domain", {{"kind", "Interval"}, {"L", 1}}},
              {"bc", "neumann"},
              {"sigma", {{"kind", "linear_cone"}, {"l", 0.5}, {"L", 1.5}}},
              {"initial", {{"kind", "sin_power"}, {"L", 1}, {"exponent", 0.5}}},
              {"n_space", 16},
              {"dt", 0.01},
              {"t_end", 0.1}};
    json e1 = to_json(simulate_config_from_json(j));
    c.add(to_json(simulate_config_from_json(e1)) == e1, "echo differs");
    bool rejected = false;
    j["bogus"] = 1;
    try {
      simulate_config_from_json(j);
    } catch (const ValidationError&) {
      rejected = true;
    }
    c.add(rejected, "unknown key accepted");
  });
  add("numbers round-trip through CSV text", [](Checks& c) {
    for (double v : {0.1, 1.0 / 3.0, 6.02214076e23, -1e-310})
      c.add(std::strtod(format_number(v).c_str(), nullptr) == v, format_number(v));
  });
  return out;
}

std::string report_line(const CheckResult& r) {
  std::string tag = r.id > 0 ? "AC" + std::to_string(r.id) : "fast";
  char t[32];
  std::snprintf(t, sizeof t, "%.1f s", r.seconds);
  return tag + " " + (r.pass ? "PASS" : "FAIL") + "  " + r.name + "  (" + t + ")  " + r.detail;
}

}  // namespace spde
