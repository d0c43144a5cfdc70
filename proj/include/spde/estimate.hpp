#pragma once

#include <Eigen/Dense>
#include <complex>
#include <functional>
#include <utility>
#include <vector>

#include "spde/heatkernel.hpp"
#include "spde/measure.hpp"
#include "spde/simulate.hpp"

namespace spde {

struct MomentEstimate {
  double value = 0.0;
  double se = 0.0;  // jackknife; equals sample std/√M for these means
  long M = 0;
  double t = 0.0;
  Point x, xp;
  double p = 2.0;
};

// Mean of |u(t,x)|^p over the ensemble.
MomentEstimate moment_estimate(const Ensemble& e, double p, double t, const Point& x);
// Mean of u(t,x) u(t,x').
MomentEstimate corr_estimate(const Ensemble& e, double t, const Point& x, const Point& xp);
// Mean of u(t,x).
MomentEstimate mean_estimate(const Ensemble& e, double t, const Point& x);

// Leave-one-out jackknife of a smooth function of sample means. Columns of
// `samples` are the per-trajectory quantities whose means feed `stat`.
std::pair<double, double> jackknife(const Eigen::MatrixXd& samples,
                                    const std::function<double(const Eigen::VectorXd&)>& stat);

struct SlopeFit {
  double slope = 0.0, intercept = 0.0;
  double se = 0.0;             // standard error of the slope
  double ci_lo = 0.0, ci_hi = 0.0;  // 95%
  int points = 0;
};

// Least squares of y on x; weights 1/σ² when sigma is given (σ of y),
// residual-based otherwise. The CI uses Student t with n-2 degrees of freedom.
SlopeFit linear_fit(const std::vector<double>& x, const std::vector<double>& y,
                    const std::vector<double>& sigma = {});

// Slope of log m(t) against t over [t_lo, t_hi]; se of m enters by the delta
// method when given.
SlopeFit lyapunov_fit(const std::vector<double>& t, const std::vector<double>& m, double t_lo, double t_hi,
                      const std::vector<double>& m_se = {});

struct EnergyEstimate {
  double value = 0.0;  // ℰ_t
  double se = 0.0;
};

// ℰ_t = (E ∫ u²)^{1/2} over the recorded cell centers of a 1d or 2d run;
// weighted = true divides by Φ₁² (Dirichlet).
EnergyEstimate l2_energy(const Ensemble& e, const SimConfig& cfg, double t, bool weighted = false);
// Same from exact discrete second moments recorded on the grid.
double l2_energy(const MomentSolution& m, const SimConfig& cfg, std::size_t time_index, bool weighted = false);
// log ℰ_t, which stays finite where ℰ_t itself overflows.
double log_l2_energy(const MomentSolution& m, const SimConfig& cfg, std::size_t time_index, bool weighted = false);

// Trapezoid ∫_0^L g over sorted interior nodes with boundary values g0, gL.
double trapezoid_1d(const std::vector<double>& x, const std::vector<double>& g, double L, double g0, double gL);

enum class ExcitationRegime { Zero, Infinity };
// Slope of log log ℰ against log λ. For the regime at zero the baseline
// log ℰ_t(0) is subtracted first when given.
SlopeFit excitation_fit(const std::vector<double>& lambdas, const std::vector<double>& energies,
                        ExcitationRegime regime, double baseline_energy = 1.0);
SlopeFit excitation_fit_log(const std::vector<double>& lambdas, const std::vector<double>& log_energies,
                            ExcitationRegime regime, double log_baseline = 0.0);

// k(t) = sup over a grid of (x, x') of ∬ G(t,x,y) G(t,x',y') |y-y'|^{-β} dy dy'.
struct KOValue {
  double value = 0.0;
  Point argmax_x, argmax_xp;
  int modes = 0;
};
KOValue kO_quadrature(const HeatKernel& hk, double beta, double t, int grid = 33);

// ∬ φ_k(y) φ_l(y') |y-y'|^{-β} dy dy' on the interval for k, l < N (mode order
// of Spectrum).
Eigen::MatrixXd riesz_mode_matrix(BC bc, double L, double beta, int N);

// ---------------------------------------------------------------- ▷ operator

// Modal form of a four-point kernel on the interval: k(t,x,x',y,y') =
// Σ φ_k(x) φ_l(x') K(t)[(k,l),(p,q)] φ_p(y) φ_q(y'), index (k,l) → k*N + l.
using ModalKernel = std::function<Eigen::MatrixXd(double)>;

struct TriangleGrid {
  int modes = 8;
  int time_panels = 16;
  int time_order = 16;
};

class TriangleSpace {
 public:
  TriangleSpace(BC bc, double L, double beta, int modes);
  int modes() const { return N_; }
  // Coupling (k,l),(p,q) → ∬ φ_kφ_p(z) f(z-z') φ_lφ_q(z') over U².
  const Eigen::MatrixXd& coupling() const { return W_; }
  ModalKernel g_tilde() const;
  double eval(const Eigen::MatrixXd& K, const Point& x, const Point& xp, const Point& y, const Point& yp) const;
  Eigen::VectorXd modes_at(double x) const;

 private:
  BC bc_;
  double L_;
  int N_;
  Eigen::VectorXd mu_;
  Eigen::MatrixXd W_;
};

// (k1 ▷ k2)(t) = ∫_0^t K1(t-s) W K2(s) ds by composite Gauss-Legendre.
Eigen::MatrixXd triangle_op(const TriangleSpace& sp, const ModalKernel& k1, const ModalKernel& k2, double t,
                            const TriangleGrid& grid = {});

// ---------------------------------------------------------------- correlation series

struct CorrSeriesConfig {
  int n_max = 3;
  int modes = 128;        // fine level; the coarse level uses half
  int cells = 0;          // physical cells for the noise coupling, 0 → 2·modes
  int uniform_steps = 200;
  double geometric_ratio = 1.08;
  double s_min = 1e-10;   // relative to t
  double tail_tol = 1e-2; // relative tail accepted at n_max
  bool two_levels = true;
  bool cross_check = true;  // also evaluate the resolvent form
};

struct CorrSeriesResult {
  Point x, xp;
  double value = 0.0;              // J̃ + Σ_{n ≤ n_max} λ^{2n} T_n
  std::vector<double> terms;       // T_0 = J̃, then λ^{2n} T_n
  double tail = 0.0;               // bound on the omitted terms
  double quad_error = 0.0;         // |fine - coarse| over the two levels
  double resolvent_value = NAN;    // a^{-2} ∬ 𝒦^a ν ν with the same truncation
  bool converged = true;
};

// Anderson two-point correlation on the interval by deterministic
// quadrature of the ▷ series. Throws NumericalError when the tail exceeds
// tail_tol·value.
std::vector<CorrSeriesResult> corr_series(const HeatKernel& hk, const InitialMeasure& nu, double beta, double lambda,
                                          double t, const std::vector<std::pair<Point, Point>>& tuples,
                                          const CorrSeriesConfig& cfg = {});

// E[e^{iRw} |m + w|^{-β}] for w ~ N(0, σ²) at R = j·ω, j = 0..J.
std::vector<std::complex<double>> gaussian_riesz_transform(double m, double sigma, double beta, double omega, int J);

}  // namespace spde
