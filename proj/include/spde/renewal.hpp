#pragma once

#include <functional>
#include <vector>

namespace spde {

struct RenewalParams {
  double rho = 0.5;
  double lambda = 1.0;
  int N = 60;
  double quad_tol = 1e-8;
};

void validate(const RenewalParams& p);

// (1 ∧ t)^{-rho}
double khat(double rho, double t);

// Σ_k C(n,k) Γ(1-ρ)^k t^{n-kρ} / Γ(n-kρ+1), the n-fold convolution of 1 + s^{-ρ}
// with 1. n <= 60; log_hstar has no cap.
double hstar_n_closed(double rho, int n, double t);
double log_hstar(double rho, int n, double t);

// Product-integration convolution with k̂ on a node grid 0 = s_0 < ... < s_M:
// (k̂ * f)(s_i) with f linear between nodes. Weights are exact for the kernel.
class RenewalGrid {
 public:
  RenewalGrid(double rho, std::vector<double> nodes);
  // Graded toward 0: s_j = T (j/M)^q.
  static RenewalGrid graded(double rho, double T, int M, double q = 3.0);

  const std::vector<double>& nodes() const { return s_; }
  int size() const { return int(s_.size()); }
  double rho() const { return rho_; }

  std::vector<double> convolve(const std::vector<double>& f) const;
  // Weight of f_i in row i (the implicit part of a Volterra step).
  double diag(int i) const { return w_[offset(i) + i]; }

  // Row weights of node i on f_0..f_i.
  void row(int i, std::vector<double>& out) const;

 private:
  static std::size_t offset(int i) { return std::size_t(i) * (i + 1) / 2; }
  double rho_;
  std::vector<double> s_;
  std::vector<double> w_;  // packed lower triangle
};

// ĥ_0..ĥ_N at t, each refined (doubling + Richardson) to rel_tol.
std::vector<double> hhat_all(double rho, int N, double t, double rel_tol = 1e-8);
double hhat_n(double rho, int n, double t, double rel_tol = 1e-8);

// Nested simplex integral with factors (1 ∧ (s_{j-1}-s_j)s_j/s_{j-1})^{-ρ}, n <= 4.
double htilde_n(double rho, int n, double t, double rel_tol = 1e-8);

struct SeriesValue {
  double value = 0.0;
  double tail = 0.0;  // estimated remainder beyond the summed terms
  int terms = 0;
  bool converged = false;
};

// Σ_{n<=N} λ^{2n} ĥ_n(t) with an upper tail from h*_n, N grown up to the cap
// until tail < quad_tol · sum.
SeriesValue Khat_lambda(const RenewalParams& p, double t);

// log K̂_λ on a grid via the renewal equation K = 1 + λ² k̂ * K, solved by
// implicit product integration in log scale. Returns log K̂ at each t in ts.
std::vector<double> log_Khat_volterra(double rho, double lambda, const std::vector<double>& ts,
                                      double h = 2e-3);

// Root γ of λ² ∫_0^∞ e^{-γs} k̂(s) ds = 1, the exponential growth rate of K̂_λ.
double renewal_growth_rate(double rho, double lambda);

// Π Γ(1+r_i) / Γ(n + Σr_i + 1) · t^{n+Σr_i} for exponents r_0..r_n.
double beta_integral_closed(const std::vector<double>& r, double t);

// |LHS - RHS| of the Gaussian product identity.
double exp_identity_residual(double C, double t, double s, const std::vector<double>& v,
                             const std::vector<double>& w);

// Σ x^n / (n!)^a.
double mittag_sum(double x, double a);

// b + Σ_{n=1}^N λ^{2n} (k̂^{*n} * b) at t.
SeriesValue gronwall_series(const std::function<double(double)>& b, double lambda, double rho,
                            double t, int N, double rel_tol = 1e-8);

}  // namespace spde
