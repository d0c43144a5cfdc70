#pragma once

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <vector>

namespace spde {

// Cells of a uniform lattice of spacing h in d = 1 or 2. Cell i occupies
// origin + h·(idx_i + [0,1]^d).
struct NoiseGrid {
  int dim = 1;
  double h = 1.0;
  std::vector<std::array<int, 2>> idx;
  std::array<double, 2> origin = {0.0, 0.0};

  std::size_t size() const { return idx.size(); }
  std::vector<double> center(std::size_t i) const;
};

// n cells of (0, L).
NoiseGrid interval_grid(int n, double L);
// n×n cells of (0, L)².
NoiseGrid square_grid(int n, double L);

// ∫_a^b ∫_c^d |y - y'|^{-β} dy' dy in one dimension (β < 1).
double riesz_rect_1d(double beta, double a, double b, double c, double d);

// Cell-averaged |·|^{-β} between unit cells offset by k (d = 1) or (k1, k2)
// (d = 2); the h-dependence is the factor h^{-β}.
double riesz_cell_1d(double beta, long k);
double riesz_cell_2d(double beta, long k1, long k2);

// C_ij = h^{-2d} ∬_{cell_i × cell_j} |y - y'|^{-β}.
Eigen::MatrixXd build_covariance(const NoiseGrid& g, double beta);

struct NoiseFactor {
  Eigen::MatrixXd cov;
  Eigen::MatrixXd factor;  // factor · factorᵀ = cov
  double clip_tol = 1e-10;
  double clipped_mass = 0.0;  // sum of |negative eigenvalues| set to zero
  bool eigen_fallback = false;
  double reconstruction_error = 0.0;  // max-norm of factor·factorᵀ - cov
};

// Cholesky when it succeeds, otherwise a symmetric eigen-decomposition with
// negative eigenvalues above -clip_tol·λ_max clipped to 0.
NoiseFactor factorize(const Eigen::MatrixXd& cov, double clip_tol = 1e-10);

// √dt · factor · ξ with ξ from the (seed, trajectory, step) stream.
Eigen::VectorXd sample_increment(const NoiseFactor& f, double dt, std::uint64_t seed,
                                 std::uint64_t trajectory, std::uint64_t step);

// Fill Z (n × cols) column j with standard normals of stream (seed, traj0 + j, step).
void fill_normals(Eigen::MatrixXd& Z, std::uint64_t seed, std::uint64_t traj0, std::uint64_t step);

}  // namespace spde
