#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <random>

#include "spde/bounds.hpp"
#include "spde/error.hpp"
#include "spde/estimate.hpp"
#include "spde/heatkernel.hpp"
#include "spde/io.hpp"
#include "spde/noise.hpp"
#include "spde/renewal.hpp"
#include "spde/simulate.hpp"
#include "spde/spectral.hpp"
#include "spde/verify.hpp"

using namespace spde;
namespace fs = std::filesystem;

namespace {

// JSON from inline text (starting with '{' or '[') or from a file.
json arg_json(const std::string& text, const std::string& opt) {
  std::size_t i = text.find_first_not_of(" \t\r\n");
  if (i != std::string::npos && (text[i] == '{' || text[i] == '['))
    return parse_json_text(text, opt);
  if (!fs::exists(text)) throw ValidationError(opt + ": '" + text + "' is neither inline JSON nor a file");
  return read_json_file(text);
}

// Re-tag "config /path: ..." messages with the option they came from.
template <class F>
auto from_arg(const std::string& opt, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const ValidationError& e) {
    std::string m = e.what();
    if (m.rfind("config ", 0) == 0) throw ValidationError(opt + " " + m.substr(7));
    throw;
  }
}

Domain parse_domain(const std::string& text) {
  return from_arg("--domain", [&] { return domain_from_json(arg_json(text, "--domain")); });
}

// Points as a JSON array ([[x,y],...] or flat) or a comma list, chunked by dim.
std::vector<Point> parse_points(const std::string& text, int dim, const std::string& opt) {
  std::vector<double> flat;
  std::vector<Point> out;
  if (!text.empty() && text.front() == '[') {
    json j = parse_json_text(text, opt);
    for (const auto& e : j) {
      if (e.is_array()) {
        Point p;
        for (const auto& v : e) {
          if (!v.is_number()) throw ValidationError(opt + ": expected numbers");
          p.push_back(v.get<double>());
        }
        if (int(p.size()) != dim) throw ValidationError(opt + ": point has the wrong dimension");
        out.push_back(p);
      } else if (e.is_number()) {
        flat.push_back(e.get<double>());
      } else {
        throw ValidationError(opt + ": expected numbers");
      }
    }
  } else {
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
      std::size_t used = 0;
      double v = 0;
      try {
        v = std::stod(item, &used);
      } catch (const std::exception&) {
        throw ValidationError(opt + ": '" + item + "' is not a number");
      }
      if (used != item.size()) throw ValidationError(opt + ": '" + item + "' is not a number");
      flat.push_back(v);
    }
  }
  if (flat.size() % std::size_t(dim) != 0)
    throw ValidationError(opt + ": " + std::to_string(flat.size()) + " coordinates do not form " +
                          std::to_string(dim) + "-dimensional points");
  for (std::size_t i = 0; i < flat.size(); i += std::size_t(dim))
    out.emplace_back(flat.begin() + long(i), flat.begin() + long(i) + dim);
  return out;
}

// Output stream: a file, or stdout for "" and "-".
struct Sink {
  std::unique_ptr<std::ofstream> file;
  std::ostream& os;
  explicit Sink(const std::string& path)
      : file(path.empty() || path == "-" ? nullptr : std::make_unique<std::ofstream>(path, std::ios::binary)),
        os(file ? static_cast<std::ostream&>(*file) : std::cout) {
    if (file && !*file) throw ValidationError("cannot write '" + path + "'");
  }
};

std::vector<std::string> coord_names(int d) {
  if (d == 1) return {"x"};
  std::vector<std::string> v;
  for (int i = 1; i <= d; ++i) v.push_back("x" + std::to_string(i));
  return v;
}

// Sample points of D: a grid for d <= 2, the first axis through the centre
// otherwise.
std::vector<Point> sample_points(const Domain& D, int k) {
  Point lo = D.lower_corner(), hi = D.upper_corner();
  std::vector<Point> pts;
  auto at = [&](int a, int i) { return lo[a] + (hi[a] - lo[a]) * (i + 0.5) / k; };
  if (D.dim() == 1) {
    for (int i = 0; i < k; ++i) pts.push_back({at(0, i)});
  } else if (D.dim() == 2) {
    for (int j = 0; j < k; ++j)
      for (int i = 0; i < k; ++i) pts.push_back({at(0, i), at(1, j)});
  } else {
    for (int i = 0; i < k; ++i) {
      Point p(D.dim());
      for (int a = 0; a < D.dim(); ++a) p[a] = 0.5 * (lo[a] + hi[a]);
      p[0] = at(0, i);
      pts.push_back(p);
    }
  }
  std::vector<Point> inside;
  for (auto& p : pts)
    if (D.contains(p)) inside.push_back(p);
  return inside;
}

std::string fmt12(double v) {
  char b[64];
  std::snprintf(b, sizeof b, "%.12f", v);
  return b;
}

// ---------------------------------------------------------------- eig

struct EigArgs {
  std::string domain, bc, csv;
  int modes = 1, samples = 0;
};

int cmd_eig(const EigArgs& a) {
  Domain D = parse_domain(a.domain);
  BC bc = parse_bc(a.bc);
  EigenPair ep = leading_eigenpair(D, bc);
  std::cout << "mu1 = " << fmt12(ep.mu1) << "\n";
  if (a.modes > 1) {
    Spectrum sp = full_spectrum(D, bc, a.modes);
    for (std::size_t i = 0; i < sp.size() && int(i) < a.modes; ++i)
      std::cout << "mu[" << i << "] = " << fmt12(sp.mu(i)) << "\n";
  }
  if (a.samples > 0) {
    Sink out(a.csv);
    CsvWriter w(out.os);
    auto head = coord_names(D.dim());
    head.push_back("phi");
    w.header(head);
    for (const auto& p : sample_points(D, a.samples)) {
      Point row = p;
      row.push_back(ep(make_site(D, p)));
      w.row(row);
    }
  }
  return 0;
}

// ---------------------------------------------------------------- kernel

struct KernelArgs {
  std::string domain, bc, x, y, csv, normalization = "l2";
  std::vector<double> t;
  int grid = 0;
  bool psi = false;
  int modes = 256;
};

int cmd_kernel(const KernelArgs& a) {
  Domain D = parse_domain(a.domain);
  BC bc = parse_bc(a.bc);
  if (a.t.empty()) throw ValidationError("--t: at least one time is required");
  for (double t : a.t)
    if (!(t > 0)) throw ValidationError("--t: times must be positive");
  if (a.psi) {
    // Ψ and Ψ* on a grid of points for every t; gnuplot reads t as the slow index.
    EigenPair ep = leading_eigenpair(D, bc);
    double scale = 1;
    if (a.normalization == "plot") {
      if (D.kind() != Domain::Kind::Ball || D.radius() != 1.0)
        throw ValidationError("--normalization plot applies to the unit Ball");
      int d = D.dim();
      double nu = (d - 2) / 2.0, z0 = first_bessel_zero(nu).z0, R = D.radius();
      Point p(d, 0.0);
      p[0] = 0.5 * R;
      double f = std::pow(0.5, (2.0 - d) / 2) * bessel_j(nu, z0 * 0.5) / ball_plot_constant(d);
      scale = f / ep(make_site(D, p));
    } else if (a.normalization != "l2") {
      throw ValidationError("--normalization: expected l2 or plot");
    }
    EigenPair scaled = ep;
    if (scale != 1) {
      auto base = ep.phi1;
      scaled.phi1 = [base, scale](const Site& s) { return scale * base(s); };
    }
    Sink out(a.csv);
    CsvWriter w(out.os);
    auto head = coord_names(D.dim());
    head.insert(head.begin(), "t");
    head.push_back("psi");
    head.push_back("psi_star");
    w.header(head);
    auto pts = sample_points(D, a.grid > 0 ? a.grid : 101);
    for (double t : a.t)
      for (const auto& p : pts) {
        Site s = make_site(D, p);
        Point row{t};
        row.insert(row.end(), p.begin(), p.end());
        row.push_back(Psi(scaled, t, s));
        row.push_back(Psi_star(scaled, t, s));
        w.row(row);
      }
    return 0;
  }
  HeatKernel hk(D, bc, a.modes);
  if (a.x.empty()) throw ValidationError("--x: a source point is required");
  auto xs = parse_points(a.x, D.dim(), "--x");
  if (a.grid > 0) {
    Sink out(a.csv);
    CsvWriter w(out.os);
    std::vector<std::string> head{"t"};
    for (auto& n : coord_names(D.dim())) head.push_back(n);
    for (auto& n : coord_names(D.dim())) head.push_back(n == "x" ? "y" : "y" + n.substr(1));
    head.push_back("G");
    w.header(head);
    auto ys = sample_points(D, a.grid);
    for (double t : a.t)
      for (const auto& x : xs)
        for (const auto& y : ys) {
          Point row{t};
          row.insert(row.end(), x.begin(), x.end());
          row.insert(row.end(), y.begin(), y.end());
          row.push_back(hk(t, x, y));
          w.row(row);
        }
    return 0;
  }
  if (a.y.empty()) throw ValidationError("--y: give a target point, or --grid for a table");
  auto ys = parse_points(a.y, D.dim(), "--y");
  json out = json::array();
  for (double t : a.t)
    for (const auto& x : xs)
      for (const auto& y : ys) out.push_back({{"t", t}, {"x", x}, {"y", y}, {"G", hk(t, x, y)}});
  std::cout << out.dump(2) << "\n";
  return 0;
}

// ---------------------------------------------------------------- data

struct DataArgs {
  std::string domain, bc = "dirichlet", measure, regularity, x;
  double t = 0;
};

int cmd_data(const DataArgs& a) {
  Domain D = parse_domain(a.domain);
  BC bc = parse_bc(a.bc);
  json canon = from_arg("--measure", [&] { return canonical_measure(arg_json(a.measure, "--measure")); });
  InitialMeasure nu = measure_from_json(canon);
  nu.check_support(D);
  Regularity reg = a.regularity.empty() ? natural_regularity(D) : parse_regularity(a.regularity);
  EigenPair ep = leading_eigenpair(D, bc);
  QuadValue l1 = phi1_measure_integral(D, ep, nu);
  json out = {{"domain", domain_to_json(D)},
              {"bc", to_string(bc)},
              {"measure", canon},
              {"regularity", to_string(reg)},
              {"mu1", ep.mu1},
              {"admissibility", to_string(admissibility(D, bc, reg, nu))},
              {"phi1_l1", l1.finite ? json(l1.value) : json(nullptr)},
              {"phi1_l1_finite", l1.finite}};
  if (a.t > 0) {
    if (a.x.empty()) throw ValidationError("--x: needed with --t");
    HeatKernel hk(D, bc);
    json J = json::array();
    for (const auto& x : parse_points(a.x, D.dim(), "--x")) {
      QuadValue v = homogeneous_solution(hk, nu, a.t, x);
      J.push_back({{"x", x}, {"J", v.finite ? json(v.value) : json(nullptr)}});
    }
    out["t"] = a.t;
    out["J"] = J;
  }
  std::cout << out.dump(2) << "\n";
  return 0;
}

// ---------------------------------------------------------------- series

struct SeriesArgs {
  double rho = 0.5, lambda = 1.0;
  std::vector<double> t;
  int n = 6;
  std::string csv;
};

int cmd_series(const SeriesArgs& a) {
  RenewalParams p;
  p.rho = a.rho;
  p.lambda = a.lambda;
  validate(p);
  if (a.t.empty()) throw ValidationError("--t-grid: at least one time is required");
  if (a.n < 0 || a.n > 60) throw ValidationError("--n: must lie in 0..60");
  Sink out(a.csv);
  CsvWriter w(out.os);
  std::vector<std::string> head{"t"};
  for (int k = 0; k <= a.n; ++k) head.push_back("hhat_" + std::to_string(k));
  for (const char* h : {"Khat", "tail", "terms", "converged"}) head.push_back(h);
  w.header(head);
  for (double t : a.t) {
    if (!(t > 0)) throw ValidationError("--t-grid: times must be positive");
    auto h = hhat_all(a.rho, a.n, t);
    SeriesValue K = Khat_lambda(p, t);
    std::vector<double> row{t};
    row.insert(row.end(), h.begin(), h.end());
    row.push_back(K.value);
    row.push_back(K.tail);
    row.push_back(K.terms);
    row.push_back(K.converged ? 1 : 0);
    w.row(row);
  }
  return 0;
}

// ---------------------------------------------------------------- bounds

int cmd_bounds(const std::string& config) {
  BoundsConfig b = from_arg("--config", [&] { return bounds_config_from_json(arg_json(config, "--config")); });
  Domain D = domain_from_json(b.domain);
  InitialMeasure nu = measure_from_json(b.initial);
  nu.check_support(D);
  EigenPair ep = leading_eigenpair(D, b.bc);
  BoundConstants k = b.constants;
  k.mu = b.bc == BC::Dirichlet ? ep.mu1 : 0.0;
  const ModelParams& m = b.model;
  validate(m, D.dim());
  Regularity reg = natural_regularity(D);
  const double t = b.t, cg = k.c_gauss;
  const bool convex = D.kind() != Domain::Kind::Annulus;

  // data functionals of each side
  auto data_at = [&](const Point& x, bool upper) {
    CorrData cd;
    if (reg == Regularity::C1Alpha && b.bc == BC::Dirichlet) {
      double c = upper ? 2 * cg / 3 : 12 * cg;
      double psi = Psi(ep, t, make_site(D, x));
      double js = J_c_star(D, ep, nu, c, t, x).value;
      cd.J_x = js;
      cd.Psi_x = psi;
    } else {
      cd.J_x = J_c(D, nu, upper ? cg : 12 * cg, t, x).value;
    }
    return cd;
  };
  auto pair = [&](bool upper) {
    CorrData a = data_at(b.x, upper), c = data_at(b.xp, upper);
    a.J_xp = c.J_x;
    a.Psi_xp = c.Psi_x;
    return a;
  };
  auto moment_data = [&](const CorrData& d) { return d.J_x * d.Psi_x; };
  auto guarded = [](auto&& f) -> json {
    try {
      double v = f();
      return std::isfinite(v) ? json(v) : json(nullptr);
    } catch (const ValidationError& e) {
      return json{{"unavailable", e.what()}};
    }
  };
  CorrData up = pair(true), lo = pair(false);
  json thresholds;
  if (b.bc == BC::Dirichlet) {
    Thresholds th = lambda_thresholds(k, m, ep.mu1);
    thresholds = {{"lambda0", th.lambda0}, {"lambda1", th.lambda1_infinite ? json("inf") : json(th.lambda1)}};
  } else {
    thresholds = {{"unavailable", "no spectral gap with neumann conditions (mu1 = 0)"}};
  }
  json out = {
      {"config", to_json(b)},
      {"mu1", ep.mu1},
      {"regularity", to_string(reg)},
      {"admissibility", to_string(admissibility(D, b.bc, reg, nu))},
      {"exponents", {{"q", q_exponent(m.beta)}, {"r", r_exponent(m.beta)}}},
      {"data", {{"upper", {{"J_x", up.J_x}, {"J_xp", up.J_xp}, {"Psi_x", up.Psi_x}, {"Psi_xp", up.Psi_xp}}},
                {"lower", {{"J_x", lo.J_x}, {"J_xp", lo.J_xp}, {"Psi_x", lo.Psi_x}, {"Psi_xp", lo.Psi_xp}}}}},
      {"moment_upper", guarded([&] { return moment_upper(b.bc, k, m, t, moment_data(up)); })},
      {"moment_lower", guarded([&] { return moment_lower(b.bc, k, m, t, moment_data(lo)); })},
      {"corr_upper", guarded([&] { return corr_bounds(b.bc, Side::Upper, reg, k, m, t, b.x, b.xp, up, convex); })},
      {"corr_lower", guarded([&] { return corr_bounds(b.bc, Side::Lower, reg, k, m, t, b.x, b.xp, lo, convex); })},
      {"thresholds", thresholds},
      {"lyapunov_bound", lyapunov_bound(m, k, m.p)},
      {"excitation_index",
       {{"large_lambda", excitation_index(Regime::LargeLambda, b.bc, m.beta)},
        {"small_lambda", guarded([&] { return excitation_index(Regime::SmallLambda, b.bc, m.beta); })}}}};
  std::cout << out.dump(2) << "\n";
  return 0;
}

// ---------------------------------------------------------------- noise-check

struct NoiseArgs {
  double beta = 0.5, L = 1.0;
  int n = 64, dim = 1;
  long samples = 20000;
  std::uint64_t seed = 1;
};

int cmd_noise_check(const NoiseArgs& a) {
  if (a.dim != 1 && a.dim != 2) throw ValidationError("--dim: must be 1 or 2");
  if (!(a.beta > 0 && a.beta < std::min(2, a.dim))) throw ValidationError("--beta: need 0 < beta < min(2, dim)");
  if (a.n < 2) throw ValidationError("--n: need at least 2 cells");
  if (a.samples < 2) throw ValidationError("--samples: need at least 2");
  NoiseGrid g = a.dim == 1 ? interval_grid(a.n, a.L) : square_grid(a.n, a.L);
  Eigen::MatrixXd C = build_covariance(g, a.beta);
  const long n = C.rows();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(C, Eigen::EigenvaluesOnly);
  double lmin = es.eigenvalues().minCoeff(), lmax = es.eigenvalues().maxCoeff();
  NoiseFactor F = factorize(C);
  double asym = (C - C.transpose()).cwiseAbs().maxCoeff();
  double toeplitz = 0;
  if (a.dim == 1)
    for (long i = 0; i + 1 < n; ++i)
      for (long j = 0; j + 1 < n; ++j) toeplitz = std::max(toeplitz, std::abs(C(i, j) - C(i + 1, j + 1)));

  // Empirical covariance against C, and lag-one correlation between steps.
  const long M = a.samples;
  Eigen::MatrixXd S = Eigen::MatrixXd::Zero(n, n);
  Eigen::VectorXd cross = Eigen::VectorXd::Zero(n), sq0 = Eigen::VectorXd::Zero(n), sq1 = Eigen::VectorXd::Zero(n);
  const long batch = 1024;
  for (long j0 = 0; j0 < M; j0 += batch) {
    long b = std::min(batch, M - j0);
    Eigen::MatrixXd Z0(n, b), Z1(n, b);
    fill_normals(Z0, a.seed, std::uint64_t(j0), 0);
    fill_normals(Z1, a.seed, std::uint64_t(j0), 1);
    Eigen::MatrixXd W0 = F.factor * Z0, W1 = F.factor * Z1;
    S.noalias() += W0 * W0.transpose();
    cross += W0.cwiseProduct(W1).rowwise().sum();
    sq0 += W0.cwiseProduct(W0).rowwise().sum();
    sq1 += W1.cwiseProduct(W1).rowwise().sum();
  }
  S /= double(M);
  double zmax = 0;
  for (long i = 0; i < n; ++i)
    for (long j = 0; j <= i; ++j) {
      double var = (C(i, i) * C(j, j) + C(i, j) * C(i, j)) / double(M);
      zmax = std::max(zmax, std::abs(S(i, j) - C(i, j)) / std::sqrt(var));
    }
  double corr_max = 0;
  for (long i = 0; i < n; ++i) corr_max = std::max(corr_max, std::abs(cross[i]) / std::sqrt(sq0[i] * sq1[i]));
  json out = {{"dim", a.dim},
              {"n", a.n},
              {"cells", n},
              {"h", g.h},
              {"beta", a.beta},
              {"symmetry_error", asym},
              {"eigenvalue_min", lmin},
              {"eigenvalue_max", lmax},
              {"psd_ratio", lmin / lmax},
              {"psd_ok", lmin >= -1e-10 * lmax},
              {"factorization", F.eigen_fallback ? "eigen" : "cholesky"},
              {"clipped_mass", F.clipped_mass},
              {"reconstruction_error", F.reconstruction_error},
              {"samples", M},
              {"seed", a.seed},
              {"empirical_max_z", zmax},
              {"empirical_z_threshold", 5.0},
              {"lag1_max_abs_corr", corr_max},
              {"lag1_threshold", 5 / std::sqrt(double(M))}};
  if (a.dim == 1) out["toeplitz_error"] = toeplitz;
  std::cout << out.dump(2) << "\n";
  return 0;
}

// ---------------------------------------------------------------- simulate

struct SimulateArgs {
  std::string config, out;
  long trajectories = -1;
  long long seed = -1;
};

int cmd_simulate(const SimulateArgs& a) {
  json j = arg_json(a.config, "--config");
  if (a.trajectories > 0 && j.is_object()) j["trajectories"] = a.trajectories;
  if (a.seed >= 0 && j.is_object()) j["seed"] = a.seed;
  SimulateConfig cfg = from_arg("--config", [&] { return simulate_config_from_json(j); });
  Ensemble e = run_ensemble(cfg.sim);
  RunFiles f = write_run(a.out, cfg, e, thread_count());
  std::cerr << "wrote " << f.csv.size() << " field table(s) to " << a.out << " (" << e.size() << " kept, "
            << e.rejected << " rejected)\n";
  return 0;
}

// ---------------------------------------------------------------- estimate

struct EstimateArgs {
  std::string runs, what, x, xp, csv;
  double p = 2.0;
  std::vector<double> window;
  bool weighted = false;
};

int cmd_estimate(const EstimateArgs& a) {
  LoadedRun run = load_run(a.runs);
  const Ensemble& e = run.ensemble;
  const SimConfig& cfg = run.config.sim;
  const int d = cfg.domain.dim();
  auto points = [&](const std::string& s, const std::string& opt) {
    if (s.empty()) {
      std::vector<Point> probes(e.points.begin(), e.points.begin() + long(e.n_probes));
      if (probes.empty()) throw ValidationError(opt + ": the run has no probes, give points");
      return probes;
    }
    return parse_points(s, d, opt);
  };
  Sink out(a.csv);
  if (a.what == "moments") {
    CsvWriter w(out.os);
    std::vector<std::string> head{"t"};
    for (auto& n : coord_names(d)) head.push_back(n);
    for (const char* h : {"p", "value", "se", "M"}) head.push_back(h);
    w.header(head);
    auto xs = points(a.x, "--x");
    for (double t : e.times)
      for (const auto& x : xs) {
        MomentEstimate m = moment_estimate(e, a.p, t, x);
        Point row{t};
        row.insert(row.end(), x.begin(), x.end());
        for (double v : {a.p, m.value, m.se, double(m.M)}) row.push_back(v);
        w.row(row);
      }
  } else if (a.what == "corr") {
    auto xs = points(a.x, "--x"), xps = points(a.xp.empty() ? a.x : a.xp, "--xp");
    if (xs.size() != xps.size()) throw ValidationError("--x/--xp: need the same number of points");
    CsvWriter w(out.os);
    std::vector<std::string> head{"t"};
    for (auto& n : coord_names(d)) head.push_back(n);
    for (auto& n : coord_names(d)) head.push_back(n + "p");
    for (const char* h : {"value", "se", "M"}) head.push_back(h);
    w.header(head);
    for (double t : e.times)
      for (std::size_t i = 0; i < xs.size(); ++i) {
        MomentEstimate m = corr_estimate(e, t, xs[i], xps[i]);
        Point row{t};
        row.insert(row.end(), xs[i].begin(), xs[i].end());
        row.insert(row.end(), xps[i].begin(), xps[i].end());
        for (double v : {m.value, m.se, double(m.M)}) row.push_back(v);
        w.row(row);
      }
  } else if (a.what == "lyapunov") {
    auto xs = points(a.x, "--x");
    double lo = e.times.front(), hi = e.times.back();
    if (!a.window.empty()) {
      if (a.window.size() != 2) throw ValidationError("--window: expected lo,hi");
      lo = a.window[0];
      hi = a.window[1];
    }
    json res = json::array();
    for (const auto& x : xs) {
      std::vector<double> m, se;
      for (double t : e.times) {
        MomentEstimate q = moment_estimate(e, a.p, t, x);
        m.push_back(q.value);
        se.push_back(q.se);
      }
      SlopeFit f = lyapunov_fit(e.times, m, lo, hi, se);
      res.push_back({{"x", x},
                     {"p", a.p},
                     {"window", {lo, hi}},
                     {"slope", f.slope},
                     {"se", f.se},
                     {"ci95", {f.ci_lo, f.ci_hi}},
                     {"points", f.points}});
    }
    out.os << res.dump(2) << "\n";
  } else if (a.what == "energy") {
    CsvWriter w(out.os);
    w.header({"t", "energy", "se", "weighted"});
    for (double t : e.times) {
      EnergyEstimate E = l2_energy(e, cfg, t, a.weighted);
      w.row({t, E.value, E.se, a.weighted ? 1.0 : 0.0});
    }
  } else {
    throw ValidationError("--what: expected moments, corr, lyapunov or energy");
  }
  return 0;
}

// ---------------------------------------------------------------- energy

struct EnergyArgs {
  std::string config, regime = "infinity", csv;
  std::vector<double> lambdas;
  bool weighted = false;
};

int cmd_energy(const EnergyArgs& a) {
  json j = arg_json(a.config, "--config");
  SimulateConfig base = from_arg("--config", [&] { return simulate_config_from_json(j); });
  if (base.sim.sigma.kind != SigmaSpec::Kind::Anderson)
    throw ValidationError("--config /sigma: energy sweeps use exact moments and need the anderson sigma");
  if (a.lambdas.size() < 4) throw ValidationError("--lambdas: need at least 4 values");
  ExcitationRegime reg;
  if (a.regime == "zero")
    reg = ExcitationRegime::Zero;
  else if (a.regime == "infinity")
    reg = ExcitationRegime::Infinity;
  else
    throw ValidationError("--regime: expected zero or infinity");
  std::vector<double> logE;
  SimConfig c = base.sim;
  c.record_grid = true;
  c.probes.clear();
  c.output_times = {c.t_end};
  for (double lam : a.lambdas) {
    if (!(lam > 0)) throw ValidationError("--lambdas: values must be positive");
    c.lambda = lam;
    MomentSolution ms = pam_moments(c);
    logE.push_back(log_l2_energy(ms, c, 0, a.weighted));
  }
  if (!a.csv.empty()) {
    Sink out(a.csv);
    CsvWriter w(out.os);
    w.header({"lambda", "log_energy"});
    for (std::size_t i = 0; i < logE.size(); ++i) w.row({a.lambdas[i], logE[i]});
  }
  SlopeFit f = excitation_fit_log(a.lambdas, logE, reg);
  Regime r = reg == ExcitationRegime::Zero ? Regime::SmallLambda : Regime::LargeLambda;
  json limit;
  try {
    limit = excitation_index(r, c.bc, c.beta);
  } catch (const ValidationError&) {
    limit = nullptr;
  }
  json out = {{"t", c.t_end},
              {"regime", a.regime},
              {"weighted", a.weighted},
              {"lambdas", a.lambdas},
              {"log_energy", logE},
              {"slope", f.slope},
              {"se", f.se},
              {"ci95", {f.ci_lo, f.ci_hi}},
              {"limit", limit}};
  std::cout << out.dump(2) << "\n";
  return 0;
}

// ---------------------------------------------------------------- verify

struct VerifyArgs {
  std::string suite = "fast", scratch;
  std::vector<int> criteria;
};

int cmd_verify(const VerifyArgs& a) {
  VerifyOptions opt;
  opt.spde_exe = fs::canonical("/proc/self/exe").string();
  opt.scratch_dir = a.scratch;
  std::vector<CheckResult> results;
  auto show = [&](const CheckResult& r) {
    std::cout << report_line(r) << std::endl;
    results.push_back(r);
  };
  if (!a.criteria.empty()) {
    for (int id : a.criteria) show(run_criterion(id, opt));
  } else if (a.suite == "fast") {
    for (const auto& r : run_fast_suite(opt)) show(r);
  } else if (a.suite == "full") {
    for (const auto& r : run_fast_suite(opt)) show(r);
    for (int id = 1; id <= kCriterionCount; ++id) show(run_criterion(id, opt));
  } else {
    throw ValidationError("--suite: expected fast or full");
  }
  long failed = std::count_if(results.begin(), results.end(), [](const CheckResult& r) { return !r.pass; });
  std::cout << results.size() - std::size_t(failed) << "/" << results.size() << " passed\n";
  return failed ? 2 : 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Stochastic heat equation on bounded domains: kernels, bounds, simulation, estimation"};
  app.require_subcommand(1);

  EigArgs eig;
  auto* s_eig = app.add_subcommand("eig", "leading eigenvalue and eigenfunction samples");
  s_eig->add_option("--domain", eig.domain, "domain JSON or file")->required();
  s_eig->add_option("--bc", eig.bc, "dirichlet or neumann")->required();
  s_eig->add_option("--modes", eig.modes, "also list the first N eigenvalues (Interval, Box)");
  s_eig->add_option("--samples", eig.samples, "phi1 samples per axis");
  s_eig->add_option("--csv", eig.csv, "CSV file for the samples, default stdout");

  KernelArgs ker;
  auto* s_ker = app.add_subcommand("kernel", "heat kernel values, grids and Psi surfaces");
  s_ker->add_option("--domain", ker.domain)->required();
  s_ker->add_option("--bc", ker.bc)->required();
  s_ker->add_option("--t", ker.t, "times")->required()->delimiter(',');
  s_ker->add_option("--x", ker.x, "source point(s)");
  s_ker->add_option("--y", ker.y, "target point(s)");
  s_ker->add_option("--grid", ker.grid, "table over a grid of target points (or Psi points)");
  s_ker->add_flag("--psi", ker.psi, "emit Psi and Psi* instead of G");
  s_ker->add_option("--normalization", ker.normalization, "l2 or plot (Ball)");
  s_ker->add_option("--modes", ker.modes, "eigen modes per axis");
  s_ker->add_option("--csv", ker.csv, "CSV output file, default stdout");

  DataArgs dat;
  auto* s_dat = app.add_subcommand("data", "initial data admissibility and the Phi1 norm");
  s_dat->add_option("--domain", dat.domain)->required();
  s_dat->add_option("--bc", dat.bc);
  s_dat->add_option("--measure", dat.measure, "measure JSON or file")->required();
  s_dat->add_option("--regularity", dat.regularity, "lipschitz or c1alpha, default from the domain");
  s_dat->add_option("--t", dat.t, "also evaluate J(t, x)");
  s_dat->add_option("--x", dat.x, "points for J");

  SeriesArgs ser;
  auto* s_ser = app.add_subcommand("series", "renewal series table");
  s_ser->add_option("--rho", ser.rho);
  s_ser->add_option("--lambda", ser.lambda);
  s_ser->add_option("--t-grid", ser.t, "times")->required()->delimiter(',');
  s_ser->add_option("--n", ser.n, "highest hhat index");
  s_ser->add_option("--csv", ser.csv);

  std::string bounds_cfg;
  auto* s_bnd = app.add_subcommand("bounds", "moment and correlation envelopes, thresholds");
  s_bnd->add_option("--config", bounds_cfg, "spde.bounds/1 JSON or file")->required();

  NoiseArgs noi;
  auto* s_noi = app.add_subcommand("noise-check", "covariance diagnostics of the discretized noise");
  s_noi->add_option("--beta", noi.beta);
  s_noi->add_option("--n", noi.n, "cells per axis");
  s_noi->add_option("--dim", noi.dim);
  s_noi->add_option("--L", noi.L, "side length");
  s_noi->add_option("--samples", noi.samples);
  s_noi->add_option("--seed", noi.seed);

  SimulateArgs sim;
  auto* s_sim = app.add_subcommand("simulate", "run an ensemble and write a run directory");
  s_sim->add_option("--config", sim.config, "spde.simulate/1 JSON or file")->required();
  s_sim->add_option("--out", sim.out, "run directory")->required();
  s_sim->add_option("--trajectories", sim.trajectories, "override the trajectory count");
  s_sim->add_option("--seed", sim.seed, "override the seed");

  EstimateArgs est;
  auto* s_est = app.add_subcommand("estimate", "statistics of a run directory");
  s_est->add_option("--runs", est.runs, "run directory written with write_raw")->required();
  s_est->add_option("--what", est.what, "moments, corr, lyapunov or energy")->required();
  s_est->add_option("--x", est.x, "points, default the run's probes");
  s_est->add_option("--xp", est.xp, "second points for corr");
  s_est->add_option("--p", est.p, "moment order");
  s_est->add_option("--window", est.window, "lo,hi for lyapunov")->delimiter(',');
  s_est->add_flag("--weighted", est.weighted, "divide by Phi1^2 (Dirichlet energy)");
  s_est->add_option("--csv", est.csv, "output file, default stdout");

  EnergyArgs ene;
  auto* s_ene = app.add_subcommand("energy", "L2 energy over a lambda grid and the excitation slope");
  s_ene->add_option("--config", ene.config, "spde.simulate/1 JSON or file (anderson)")->required();
  s_ene->add_option("--lambdas", ene.lambdas)->required()->delimiter(',');
  s_ene->add_option("--regime", ene.regime, "zero or infinity");
  s_ene->add_flag("--weighted", ene.weighted);
  s_ene->add_option("--csv", ene.csv);

  VerifyArgs ver;
  auto* s_ver = app.add_subcommand("verify", "self-checks and acceptance criteria");
  s_ver->add_option("--suite", ver.suite, "fast or full");
  s_ver->add_option("--criterion", ver.criteria, "acceptance criteria to run")
      ->delimiter(',')
      ->check(CLI::Range(1, kCriterionCount));
  s_ver->add_option("--scratch", ver.scratch, "directory for temporary output");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    if (*s_eig) return cmd_eig(eig);
    if (*s_ker) return cmd_kernel(ker);
    if (*s_dat) return cmd_data(dat);
    if (*s_ser) return cmd_series(ser);
    if (*s_bnd) return cmd_bounds(bounds_cfg);
    if (*s_noi) return cmd_noise_check(noi);
    if (*s_sim) return cmd_simulate(sim);
    if (*s_est) return cmd_estimate(est);
    if (*s_ene) return cmd_energy(ene);
    if (*s_ver) return cmd_verify(ver);
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const json::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "failure: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
