#pragma once

#include <string>

#include "spde/geometry.hpp"
#include "spde/measure.hpp"
#include "spde/spectral.hpp"

namespace spde {

struct ModelParams {
  double lambda = 1.0;
  double beta = 0.5;
  double L_sigma = 1.0;
  double l_sigma = 1.0;
  double C_f = 1.0;
  double p = 2.0;
  bool anderson = false;  // σ(u) = u, which gives l = L = 1 for lower bounds
};

// Throws ValidationError unless 0 < β < min(2, d), L ≥ l ≥ 0, p ≥ 2.
void validate(const ModelParams& m, int dim);

struct BoundConstants {
  double C = 1.0, c = 1.0, c_prime = 1.0;
  double C_bar = 1.0, c_bar = 1.0, c_tilde = 1.0;
  double c_gauss = 0.25;  // Gaussian rate of the kernel envelope (c₁, c₂, c₃, c₄ by context)
  double mu = 0.0;        // μ₁ for Dirichlet, 0 for Neumann
};

void validate(const BoundConstants& k);

enum class Regularity { Lipschitz, C1Alpha };
enum class Side { Upper, Lower };

std::string to_string(Regularity r);
Regularity parse_regularity(const std::string& s);
std::string to_string(Side s);
Side parse_side(const std::string& s);

// C^{1,α} for Interval, Ball, Annulus; Box and products go through the
// product form of Ψ and count as C^{1,α} too.
Regularity natural_regularity(const Domain& D);

// exponent helpers: 4/(2-β) and 2/(2-β)
double q_exponent(double beta);
double r_exponent(double beta);

// C e^{t(C p λ² L² + C p^{2/(2-β)} λ^{4/(2-β)} L^{4/(2-β)} - μ)} · data, where data
// is J_c(t,x) (Lipschitz) or Ψ(t,x) J*_{2c₁/3}(t,x) (C^{1,α}).
double moment_upper(BC bc, const BoundConstants& k, const ModelParams& m, double t, double data);

// C̄ e^{t(c̄ λ² l² + c̃ λ^{4/(2-β)} l^{4/(2-β)} - μ)} · data with data = J_{12c₂,ε} or
// Ψ J*_{12c₂}; this is the p-th root of the p-th moment lower bound.
double moment_lower(BC bc, const BoundConstants& k, const ModelParams& m, double t, double data);

struct CorrData {
  double J_x = 1.0, J_xp = 1.0;      // the J functional of the matching side
  double Psi_x = 1.0, Psi_xp = 1.0;  // used for C^{1,α}
};

// Two-point correlation envelopes. Lower bounds need l_σ > 0 or Anderson σ;
// the Lipschitz Neumann lower bound additionally needs a convex domain
// (neumann_convex).
double corr_bounds(BC bc, Side side, Regularity reg, const BoundConstants& k, const ModelParams& m,
                   double t, const Point& x, const Point& xp, const CorrData& data,
                   bool neumann_convex = false);

struct ResolventArgs {
  double t;
  Point x, xp, y, yp;
  double psi[4] = {1, 1, 1, 1};  // Ψ(t,x), Ψ(t,x'), Ψ(t,y), Ψ(t,y')
};

// Envelopes of the resolvent kernel 𝒦^λ.
double resolvent_envelope(BC bc, Side side, Regularity reg, const BoundConstants& k,
                          const ModelParams& m, const ResolventArgs& a, bool neumann_convex = false);

struct Thresholds {
  double lambda0 = 0.0;
  double lambda1 = 0.0;
  bool lambda1_infinite = false;
};

// λ₀ = sup{λ: 2cλ²L² + 2^{2/(2-β)} c' λ^{4/(2-β)} L^{4/(2-β)} ≤ μ₁},
// λ₁ = inf{λ: c̄ λ² l² + c̃ λ^{4/(2-β)} l^{4/(2-β)} ≥ μ₁}.
Thresholds lambda_thresholds(const BoundConstants& k, const ModelParams& m, double mu1);

// p(c p λ² L² + c' p^{2/(2-β)} λ^{4/(2-β)} L^{4/(2-β)} - μ₁)
double lyapunov_bound(const ModelParams& m, const BoundConstants& k, double p);

enum class Regime { LargeLambda, SmallLambda };
Regime parse_regime(const std::string& s);

// 4/(2-β) for large λ; 2 for small λ (Neumann only).
double excitation_index(Regime regime, BC bc, double beta);

enum class Admissibility { BoundedDensity, FiniteMeasure, Phi1Integrable, Inadmissible };
std::string to_string(Admissibility a);

// Strongest class of initial data that the existence theory covers.
Admissibility admissibility(const Domain& D, BC bc, Regularity reg, const InitialMeasure& nu);

}  // namespace spde
