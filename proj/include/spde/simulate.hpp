#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "spde/geometry.hpp"
#include "spde/measure.hpp"
#include "spde/noise.hpp"
#include "spde/spectral.hpp"

namespace spde {

// σ(u) with σ(0) = 0, l|u| ≤ |σ(u)| ≤ L|u| and Lipschitz constant L.
struct SigmaSpec {
  enum class Kind { Anderson, LinearCone, Custom };
  Kind kind = Kind::Anderson;
  double l = 1.0, L = 1.0;
  std::function<double(double)> custom;

  static SigmaSpec anderson();
  // s(u) = (l+L)/2 · |u|; with l = L = κ this is κ|u|.
  static SigmaSpec linear_cone(double l, double L);
  static SigmaSpec custom_fn(std::function<double(double)> f, double l, double L);

  double operator()(double u) const {
    switch (kind) {
      case Kind::Anderson: return u;
      case Kind::LinearCone: return 0.5 * (l + L) * (u < 0 ? -u : u);
      default: return custom(u);
    }
  }
  // Throws ValidationError when σ(0) ≠ 0 or the Lipschitz/cone constants fail
  // on random pairs.
  void validate(std::uint64_t seed = 1) const;
  std::string name() const;
};

enum class Scheme { ExpEulerEigen, SemiImplicitFD };
std::string to_string(Scheme s);
Scheme parse_scheme(const std::string& s);

struct SimConfig {
  Domain domain = Domain::interval(1.0);
  BC bc = BC::Dirichlet;
  SigmaSpec sigma;
  double lambda = 1.0;
  double beta = 0.5;
  InitialMeasure initial;
  int n_space = 128;  // cells per dimension
  double dt = 1e-4;
  double t_end = 0.1;
  long trajectories = 1;
  std::uint64_t seed = 0;
  Scheme scheme = Scheme::ExpEulerEigen;
  std::vector<double> output_times;  // empty: {t_end}
  std::vector<Point> probes;         // extra output points
  bool record_grid = true;           // also record every cell center
  int modes = 0;                     // eigen scheme truncation, 0 → n_space^d

  void validate() const;
  std::vector<double> resolved_output_times() const;
  long steps() const;
};

// Cell-centered lattice of spacing h over the bounding box; for Ball/Annulus
// only cells whose center lies inside are kept.
struct SimGrid {
  Domain domain = Domain::interval(1.0);
  int n = 0;
  double h = 0;
  NoiseGrid cells;
  std::vector<Point> centers;
  std::vector<long> lookup;  // lattice index → cell index or -1
  bool masked = false;

  long lattice_index(int i, int j) const { return cells.dim == 1 ? i : long(j) * n + i; }
  long cell_at(int i, int j) const;  // -1 outside
};

SimGrid make_grid(const Domain& D, int n);

// Cell averages of the initial measure. Atoms put m/h^d on the containing
// cell, lower index on ties. A density whose integral over a boundary cell
// diverges is averaged against the Dirichlet weight Φ₁(y)/Φ₁(center) there;
// under Neumann that is an error.
std::vector<double> discretize_initial(const InitialMeasure& nu, const SimGrid& g, BC bc);

// Exponential Euler in the eigenbasis (Interval and Box).
class EigenStepper {
 public:
  EigenStepper(const SimGrid& g, BC bc, int modes, double dt);
  int modes() const { return int(mu_.size()); }
  const Eigen::VectorXd& mu() const { return mu_; }
  const Eigen::MatrixXd& basis() const { return Phi_; }  // cells × modes
  // Exact coefficients ∫ φ_k dν (atoms: m φ_k(y0); densities by quadrature).
  Eigen::VectorXd project_measure(const InitialMeasure& nu) const;
  Eigen::VectorXd project_field(const Eigen::VectorXd& cells) const;
  Eigen::MatrixXd eval_matrix(const std::vector<Point>& pts) const;  // pts × modes
  // coef ← e^{-μ dt}(coef + λ P (σ(Φ coef) ∘ dW)); columns are trajectories.
  void step(Eigen::MatrixXd& coef, const Eigen::MatrixXd& dW, double lambda, const SigmaSpec& sigma) const;
  Eigen::MatrixXd to_cells(const Eigen::MatrixXd& coef) const { return Phi_ * coef; }
  const Eigen::MatrixXd& projector() const { return P_; }
  const Eigen::VectorXd& decay() const { return decay_; }

 private:
  SimGrid grid_;
  BC bc_;
  Spectrum spec_;
  Eigen::VectorXd mu_, decay_;
  Eigen::MatrixXd Phi_, P_;
};

// Five-point (d = 2) / three-point (d = 1) Laplacian on the cell lattice.
// Dirichlet: ghost = -u (zero trace on the face); Neumann: ghost = u.
Eigen::SparseMatrix<double> laplacian(const SimGrid& g, BC bc);

class FDStepper {
 public:
  FDStepper(const SimGrid& g, BC bc, double dt);
  // (I - dt Δ_h) u ← u + λ σ(u) ∘ dW.
  void step(Eigen::MatrixXd& u, const Eigen::MatrixXd& dW, double lambda, const SigmaSpec& sigma) const;
  void solve(Eigen::MatrixXd& rhs) const;
  Eigen::SparseMatrix<double> interp_matrix(const std::vector<Point>& pts) const;  // pts × cells
  const Eigen::SparseMatrix<double>& system() const { return A_; }

 private:
  SimGrid grid_;
  BC bc_;
  Eigen::SparseMatrix<double> A_;
  std::shared_ptr<Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>>> ldlt_;
};

// Single-step entry points on one trajectory.
Eigen::VectorXd step_exp_euler_eigen(const EigenStepper& st, const Eigen::VectorXd& coef,
                                     const Eigen::VectorXd& dW, double lambda, const SigmaSpec& sigma);
Eigen::VectorXd step_semi_implicit_fd(const FDStepper& st, const Eigen::VectorXd& u, const Eigen::VectorXd& dW,
                                      double lambda, const SigmaSpec& sigma);

struct Ensemble {
  std::vector<double> times;
  std::vector<Point> points;                // probes first, then cell centers if recorded
  std::vector<Eigen::MatrixXd> values;      // per time: kept trajectories × points
  std::vector<long> kept;                   // trajectory indices
  long rejected = 0;
  double negative_fraction = 0.0;           // among recorded grid values
  std::uint64_t seed = 0;
  std::uint64_t config_hash = 0;
  std::size_t n_probes = 0;

  long size() const { return long(kept.size()); }
  std::size_t point_index(const Point& p, double tol = 1e-12) const;
  std::size_t time_index(double t, double tol = 1e-9) const;
};

// Trajectories in fixed-size batches keyed by (seed, index); SPDE_THREADS caps
// the worker count. Throws NumericalError when more than 0.1% are rejected.
Ensemble run_ensemble(const SimConfig& cfg);

// Worker count from SPDE_THREADS, default hardware concurrency.
int thread_count();

// Exact first and second moments of the discrete Anderson scheme:
// mean_{k+1} = A mean_k, Q_{k+1} = A (Q_k + λ² dt (C ∘ Q_k)) Aᵀ in physical
// variables (eigen coefficients for the eigen scheme).
struct MomentSolution {
  std::vector<double> times;
  std::vector<Point> points;
  std::vector<Eigen::VectorXd> mean;    // at points
  std::vector<Eigen::MatrixXd> second;  // E[u(p) u(p')] · e^{-log_scale}
  std::vector<double> log_scale;        // zero unless the moments would overflow
};
MomentSolution pam_moments(const SimConfig& cfg);

// FNV-1a over a canonical text rendering of the configuration.
std::uint64_t config_hash(const SimConfig& cfg);
std::string describe(const SimConfig& cfg);

}  // namespace spde
