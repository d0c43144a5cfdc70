#pragma once

#include <string>
#include <vector>

namespace spde {

using Point = std::vector<double>;

// Closed catalog of bounded domains. Products may nest.
class Domain {
 public:
  enum class Kind { Interval, Box, Ball, Annulus, Product };

  static Domain interval(double L);
  static Domain box(int d, double L);
  static Domain ball(int d, double R);
  static Domain annulus(double R1, double R2);
  static Domain product(std::vector<Domain> factors);

  Kind kind() const { return kind_; }
  int dim() const { return dim_; }
  double length() const { return a_; }  // Interval/Box side
  double radius() const { return a_; }   // Ball radius
  double inner_radius() const { return a_; }
  double outer_radius() const { return b_; }
  const std::vector<Domain>& factors() const { return factors_; }

  double diameter() const;
  double volume() const;
  std::string name() const;

  // Axis-aligned bounding box [lo, hi].
  Point lower_corner() const;
  Point upper_corner() const;

  bool contains(const Point& x) const;
  double dist_to_boundary(const Point& x) const;
  bool inner_region_contains(double eps, const Point& x) const;

  // Vol(U ∩ B(y, r)). Exact on the interval; grid counting elsewhere at
  // spacing resolution*diameter.
  double vol_ball_cap(const Point& y, double r, double resolution = 1e-3) const;

  // Split a point of a product domain into factor coordinates.
  std::vector<Point> split(const Point& x) const;

  bool operator==(const Domain& o) const;

 private:
  Domain() = default;
  void check_dim(const Point& x) const;
  bool contains_unchecked(const double* x) const;
  double dist_unchecked(const double* x) const;

  Kind kind_ = Kind::Interval;
  int dim_ = 1;
  double a_ = 1.0;
  double b_ = 0.0;
  std::vector<Domain> factors_;
};

// δ = arctan(1/K_U) ∧ r0 for a Lipschitz domain with constant K_U.
double delta_cone_parameter(double K_U, double r0);

}  // namespace spde
