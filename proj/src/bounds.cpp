#include "spde/bounds.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

#include "spde/error.hpp"

namespace spde {

namespace {

double dist2(const Point& a, const Point& b) {
  require(a.size() == b.size(), "bounds: point dimension mismatch");
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return s;
}

double effective_mu(BC bc, const BoundConstants& k) { return bc == BC::Neumann ? 0.0 : k.mu; }

// λ² a + λ^q b with the cone-side Lipschitz constant folded in
double rate(double lambda, double L, double beta, double a, double b) {
  double q = q_exponent(beta);
  return a * lambda * lambda * L * L + b * std::pow(lambda * L, q);
}

double lower_L(const ModelParams& m) {
  if (m.anderson) return 1.0;
  require(m.l_sigma > 0, "lower bounds need l_sigma > 0 or Anderson sigma");
  return m.l_sigma;
}

double bisect_increasing(const std::function<double(double)>& F, double target) {
  double lo = 0, hi = 1;
  while (F(hi) < target) {
    hi *= 2;
    if (hi > 1e150) throw NumericalError("threshold bisection: no bracket");
  }
  for (int i = 0; i < 300 && hi - lo > 1e-16 * hi; ++i) {
    double mid = 0.5 * (lo + hi);
    (F(mid) < target ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace

void validate(const ModelParams& m, int dim) {
  require(m.lambda >= 0, "lambda must be >= 0");
  require(m.beta > 0 && m.beta < std::min(2.0, double(dim)), "beta must lie in (0, min(2, d))");
  require(m.L_sigma > 0, "L_sigma must be > 0");
  require(m.l_sigma >= 0 && m.l_sigma <= m.L_sigma, "need 0 <= l_sigma <= L_sigma");
  require(m.C_f >= 1, "C_f must be >= 1");
  require(m.p >= 2, "p must be >= 2");
}

void validate(const BoundConstants& k) {
  require(k.C > 0 && k.c > 0 && k.c_prime > 0 && k.C_bar > 0 && k.c_bar > 0 && k.c_tilde > 0 &&
              k.c_gauss > 0,
          "bound constants must be positive");
  require(k.mu >= 0, "mu must be >= 0");
}

std::string to_string(Regularity r) { return r == Regularity::Lipschitz ? "lipschitz" : "c1alpha"; }
Regularity parse_regularity(const std::string& s) {
  if (s == "lipschitz") return Regularity::Lipschitz;
  if (s == "c1alpha") return Regularity::C1Alpha;
  throw ValidationError("unknown regularity '" + s + "' (lipschitz|c1alpha)");
}
std::string to_string(Side s) { return s == Side::Upper ? "upper" : "lower"; }
Side parse_side(const std::string& s) {
  if (s == "upper") return Side::Upper;
  if (s == "lower") return Side::Lower;
  throw ValidationError("unknown side '" + s + "' (upper|lower)");
}

Regularity natural_regularity(const Domain&) { return Regularity::C1Alpha; }

double q_exponent(double beta) { return 4 / (2 - beta); }
double r_exponent(double beta) { return 2 / (2 - beta); }

double moment_upper(BC bc, const BoundConstants& k, const ModelParams& m, double t, double data) {
  validate(k);
  require(t > 0, "moment_upper: t must be positive");
  double p = m.p;
  double g = rate(m.lambda, m.L_sigma, m.beta, k.C * p, k.C * std::pow(p, r_exponent(m.beta)));
  return k.C * std::exp(t * (g - effective_mu(bc, k))) * data;
}

double moment_lower(BC bc, const BoundConstants& k, const ModelParams& m, double t, double data) {
  validate(k);
  require(t > 0, "moment_lower: t must be positive");
  double g = rate(m.lambda, lower_L(m), m.beta, k.c_bar, k.c_tilde);
  return k.C_bar * std::exp(t * (g - effective_mu(bc, k))) * data;
}

double corr_bounds(BC bc, Side side, Regularity reg, const BoundConstants& k, const ModelParams& m,
                   double t, const Point& x, const Point& xp, const CorrData& d,
                   bool neumann_convex) {
  validate(k);
  require(t > 0, "corr_bounds: t must be positive");
  const double mu = effective_mu(bc, k);
  double psi = reg == Regularity::C1Alpha ? d.Psi_x * d.Psi_xp : 1.0;
  if (side == Side::Upper) {
    double g = rate(m.lambda, m.L_sigma, m.beta, k.C, k.C);
    return k.C * std::exp(2 * t * (g - mu)) * psi * d.J_x * d.J_xp;
  }
  if (bc == BC::Neumann && reg == Regularity::Lipschitz)
    require(neumann_convex, "Neumann lower correlation bound needs a convex domain");
  double g = rate(m.lambda, lower_L(m), m.beta, k.C_bar, k.C_bar);
  return k.C_bar * std::exp(2 * t * (g - mu)) * std::exp(-16 * k.c_gauss * dist2(x, xp) / t) * psi *
         d.J_x * d.J_xp;
}

double resolvent_envelope(BC bc, Side side, Regularity reg, const BoundConstants& k,
                          const ModelParams& m, const ResolventArgs& a, bool neumann_convex) {
  validate(k);
  require(a.t > 0, "resolvent_envelope: t must be positive");
  const int d = int(a.x.size());
  const double t = a.t, l2 = m.lambda * m.lambda, q = q_exponent(m.beta);
  const double pre = l2 / std::min(1.0, std::pow(t, d));
  const double far = dist2(a.x, a.y) + dist2(a.xp, a.yp);
  double psi = 1;
  if (reg == Regularity::C1Alpha) {
    require(bc == BC::Dirichlet, "C1alpha resolvent envelopes are Dirichlet statements");
    psi = a.psi[0] * a.psi[1] * a.psi[2] * a.psi[3];
  }
  if (side == Side::Upper) {
    double cg = reg == Regularity::C1Alpha ? 2 * k.c_gauss / 3 : k.c_gauss;
    double g = k.c * l2 + k.c_prime * std::pow(m.lambda, q);
    double time = bc == BC::Dirichlet ? 2 * t * (g - k.mu) : t * g;
    return k.C * pre * psi * std::exp(-cg * far / t) * std::exp(time);
  }
  if (bc == BC::Neumann) require(neumann_convex, "Neumann lower resolvent bound needs a convex domain");
  double g = k.c_bar * l2 + k.c_tilde * std::pow(m.lambda, q);
  double time = bc == BC::Dirichlet ? 2 * t * (g - k.mu) : t * g;
  return k.C_bar * pre * psi * std::exp(-16 * k.c_gauss * dist2(a.x, a.xp) / t) *
         std::exp(-12 * k.c_gauss * far / t) * std::exp(time);
}

Thresholds lambda_thresholds(const BoundConstants& k, const ModelParams& m, double mu1) {
  validate(k);
  require(mu1 > 0, "lambda_thresholds: mu1 must be positive");
  const double q = q_exponent(m.beta), r = r_exponent(m.beta);
  Thresholds out;
  auto up = [&](double lam) {
    return 2 * k.c * lam * lam * m.L_sigma * m.L_sigma + std::pow(2.0, r) * k.c_prime * std::pow(lam * m.L_sigma, q);
  };
  out.lambda0 = bisect_increasing(up, mu1);
  double l = m.anderson ? 1.0 : m.l_sigma;
  if (l == 0) {
    out.lambda1 = INFINITY;
    out.lambda1_infinite = true;
    return out;
  }
  auto lo = [&](double lam) { return k.c_bar * lam * lam * l * l + k.c_tilde * std::pow(lam * l, q); };
  out.lambda1 = bisect_increasing(lo, mu1);
  return out;
}

double lyapunov_bound(const ModelParams& m, const BoundConstants& k, double p) {
  require(p >= 2, "lyapunov_bound: p must be >= 2");
  double g = k.c * p * m.lambda * m.lambda * m.L_sigma * m.L_sigma +
             k.c_prime * std::pow(p, r_exponent(m.beta)) * std::pow(m.lambda * m.L_sigma, q_exponent(m.beta));
  return p * (g - k.mu);
}

Regime parse_regime(const std::string& s) {
  if (s == "large_lambda" || s == "large") return Regime::LargeLambda;
  if (s == "small_lambda" || s == "small") return Regime::SmallLambda;
  throw ValidationError("unknown regime '" + s + "' (large_lambda|small_lambda)");
}

double excitation_index(Regime regime, BC bc, double beta) {
  require(beta > 0 && beta < 2, "excitation_index: beta must lie in (0,2)");
  if (regime == Regime::LargeLambda) return q_exponent(beta);
  require(bc == BC::Neumann, "small-lambda excitation index is only asserted for Neumann conditions");
  return 2.0;
}

std::string to_string(Admissibility a) {
  switch (a) {
    case Admissibility::BoundedDensity: return "bounded-density";
    case Admissibility::FiniteMeasure: return "finite-measure";
    case Admissibility::Phi1Integrable: return "phi1-integrable";
    case Admissibility::Inadmissible: return "inadmissible";
  }
  return "?";
}

Admissibility admissibility(const Domain& D, BC bc, Regularity reg, const InitialMeasure& nu) {
  nu.check_support(D);
  if (nu.atoms().empty() && has_bounded_density(D, nu)) return Admissibility::BoundedDensity;
  if (total_variation(D, nu).finite) return Admissibility::FiniteMeasure;
  if (bc == BC::Dirichlet && reg == Regularity::C1Alpha) {
    auto ep = leading_eigenpair(D, bc);
    if (phi1_measure_integral(D, ep, nu).finite) return Admissibility::Phi1Integrable;
  }
  return Admissibility::Inadmissible;
}

}  // namespace spde
