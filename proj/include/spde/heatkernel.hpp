#pragma once

#include <vector>

#include "spde/geometry.hpp"
#include "spde/measure.hpp"
#include "spde/spectral.hpp"

namespace spde {

// Exact heat kernel of -Δ on Interval and Box members (tensor products of the
// interval kernel): eigen series for t >= t_switch, image sums below.
class HeatKernel {
 public:
  HeatKernel(const Domain& D, BC bc, int modes = 256, double t_switch = -1);

  const Domain& domain() const { return domain_; }
  BC bc() const { return bc_; }
  int modes() const { return N_; }
  double t_switch() const { return t_switch_; }

  double operator()(double t, const Point& x, const Point& y) const;
  // y given as a Site so that boundary gaps stay exact.
  double eval_site(double t, const Point& x, const Site& y) const;

  // One-dimensional kernel on (0, L) with y at gaps (ylo, yhi).
  double g1(double t, double x, double ylo, double yhi) const;
  double g1_eigen(double t, double x, double ylo, double yhi) const;
  double g1_images(double t, double x, double ylo, double yhi) const;

  // ∫_a^b G1(t, x, y) dy on the interval.
  double cell_integral_1d(double t, double x, double a, double b) const;

 private:
  Domain domain_;
  BC bc_;
  int N_;
  double L_;
  double t_switch_;
};

struct BoundEnvelope {
  enum class Side { Upper, Lower };
  double C = 1.0;
  double c = 0.25;
  double a = 1.0;
  double mu = 0.0;
  Side side = Side::Upper;
};

// Dirichlet: C (1 ∧ Φ₁(x)/(1 ∧ t^{a/2}))(1 ∧ Φ₁(y)/(1 ∧ t^{a/2})) e^{-μt}/(1 ∧ t^{d/2}) e^{-c|x-y|²/t};
// Neumann: no boundary factors.
double envelope_eval(const BoundEnvelope& env, const EigenPair& ep, double t, const Site& x,
                     const Site& y);

struct EnvelopeFit {
  BoundEnvelope env;
  double kappa;  // max over the grid of max(G/env, env/G) for the unshifted fit
};

// Least-squares fit of (log C, c) in log space over the grid, then C shifted so
// the envelope lies above (Upper) or below (Lower) every sample.
EnvelopeFit fit_envelope(const HeatKernel& hk, const EigenPair& ep, const std::vector<double>& ts,
                         const std::vector<Point>& xs, BoundEnvelope::Side side, double a = 1.0);

// J(t,x) = ∫ G(t,x,y) ν(dy).
QuadValue homogeneous_solution(const HeatKernel& hk, const InitialMeasure& nu, double t,
                               const Point& x, double rel_tol = 1e-10);

// J_c over U (eps = 0) or U_eps.
QuadValue J_c(const Domain& D, const InitialMeasure& nu, double c, double t, const Point& x,
              double eps = 0.0, double rel_tol = 1e-10);

double Psi(const EigenPair& ep, double t, const Site& x);
double Psi_star(const EigenPair& ep, double t, const Site& x);

// J*_c with Ψ* on product-structured members (Box, Product) and Ψ otherwise.
QuadValue J_c_star(const Domain& D, const EigenPair& ep, const InitialMeasure& nu, double c,
                   double t, const Point& x, double rel_tol = 1e-10);

}  // namespace spde
