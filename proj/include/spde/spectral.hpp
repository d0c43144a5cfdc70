#pragma once

#include <functional>
#include <string>
#include <vector>

#include "spde/geometry.hpp"
#include "spde/measure.hpp"

namespace spde {

enum class BC { Dirichlet, Neumann };

std::string to_string(BC bc);
BC parse_bc(const std::string& s);

double bessel_j(double nu, double x);
double bessel_y(int nu, double x);  // nu in {0, 1}

struct BesselZero {
  double z0;
  double derivative;  // J_nu'(z0), nonzero
};

BesselZero first_bessel_zero(double nu);

// Smallest positive root of J0(R1 z) Y0(R2 z) - Y0(R1 z) J0(R2 z).
double cross_product_zero(double R1, double R2);

// Z(r) = J0(R1 z0) Y0(r z0) - Y0(R1 z0) J0(r z0), before sign normalization.
double annulus_Z(double r, double R1, double R2, double z0);
double annulus_Z_prime(double r, double R1, double z0);

// Leading eigenpair. For Box and Product members `factors` holds the factor
// pairs (used by Psi*).
struct EigenPair {
  double mu1 = 0.0;
  BC bc = BC::Dirichlet;
  int dim = 1;
  double norm = 1.0;  // L2 norm of phi1 as computed by quadrature
  std::function<double(const Site&)> phi1;
  std::vector<EigenPair> factors;
  std::vector<int> gap_offsets;  // gap-slot offset of each factor in a Site
  std::vector<int> x_offsets;

  double operator()(const Site& s) const { return phi1(s); }
  // Split a site into the factor sites.
  Site factor_site(const Site& s, std::size_t k) const;
};

EigenPair leading_eigenpair(const Domain& D, BC bc);

// Plotting normalization of the ball eigenfunction (R = 1): the constant with
// max over |x| <= 1 of |x|^{(2-d)/2} J_{(d-2)/2}(z0|x|) / C_d equal to 1.
double ball_plot_constant(int d);

struct Mode {
  double mu;
  std::vector<int> k;  // per-axis wavenumbers
};

class Spectrum {
 public:
  static constexpr int kMaxModes = 1 << 16;

  Spectrum(const Domain& D, BC bc, int N);
  const std::vector<Mode>& modes() const { return modes_; }
  std::size_t size() const { return modes_.size(); }
  double mu(std::size_t i) const { return modes_[i].mu; }
  double eval(std::size_t i, const Point& x) const;
  BC bc() const { return bc_; }
  double side() const { return L_; }
  int dim() const { return d_; }

  // One-dimensional mode k on (0, L).
  static double mode1d(BC bc, int k, double L, double x);

 private:
  BC bc_;
  double L_;
  int d_;
  std::vector<Mode> modes_;
};

Spectrum full_spectrum(const Domain& D, BC bc, int N);

// ∫ Φ₁ d|ν|; finite = false when the quadrature diverges.
QuadValue phi1_measure_integral(const Domain& D, const EigenPair& ep, const InitialMeasure& nu);

// Fitted c0 >= 1 with c0^{-1} dist <= Φ₁ <= c0 dist over a sample of points.
double fit_phi_distance_constant(const Domain& D, const EigenPair& ep, int samples = 2000);

}  // namespace spde
