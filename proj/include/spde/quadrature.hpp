#pragma once

#include <functional>
#include <vector>

namespace spde::quad {

struct Result {
  double value = 0.0;
  double error = 0.0;
  long evaluations = 0;
  bool divergent = false;
};

// Reported as divergent past these limits.
inline constexpr double kDivergentSum = 1e12;
inline constexpr long kMaxEvaluations = 1000000;

// Integrand on (a, b) receiving the abscissa and its exact distances to both
// ends, so that boundary-singular integrands can be evaluated without
// cancellation.
using Integrand = std::function<double(double x, double gap_lo, double gap_hi)>;

// Double-exponential quadrature with level doubling until successive levels
// agree to rel_tol.
Result tanh_sinh(const Integrand& f, double a, double b, double rel_tol = 1e-10,
                 int max_level = 10);

// Same, split at the given interior breakpoints.
Result tanh_sinh_split(const Integrand& f, double a, double b, std::vector<double> breaks,
                       double rel_tol = 1e-10, int max_level = 10);

struct Rule {
  std::vector<double> x, w;
};

// n-point Gauss-Legendre rule on [-1, 1]. Cached per n.
const Rule& gauss_legendre(int n);

// Composite Gauss-Legendre over [a, b] with `panels` equal panels.
double composite_gl(const std::function<double(double)>& f, double a, double b, int panels,
                    int order = 8);

// Composite Simpson, doubling panels from `start` until the relative change is
// below rel_tol.
double simpson_refined(const std::function<double(double)>& f, double a, double b,
                       double rel_tol = 1e-10, int start = 64, int max_panels = 1 << 22);

// Neumaier compensated sum.
class KahanSum {
 public:
  void add(double v) {
    double t = s_ + v;
    if (abs_(s_) >= abs_(v))
      c_ += (s_ - t) + v;
    else
      c_ += (v - t) + s_;
    s_ = t;
  }
  double value() const { return s_ + c_; }

 private:
  static double abs_(double v) { return v < 0 ? -v : v; }
  double s_ = 0.0, c_ = 0.0;
};

}  // namespace spde::quad
