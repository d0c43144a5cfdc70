#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "spde/geometry.hpp"
#include "spde/quadrature.hpp"

namespace spde {

// A point together with exact boundary gaps. For Interval/Box factors lo/hi
// hold x_i and L - x_i per coordinate; for Ball factors lo = |x|, hi = R - |x|;
// for Annulus factors lo = |x| - R1, hi = R2 - |x|. Products concatenate.
struct Site {
  Point x;
  std::vector<double> lo, hi;
};

// Site of an interior point with gaps computed from the coordinates.
Site make_site(const Domain& D, const Point& x);

// Number of gap slots a domain contributes to a Site.
int gap_slots(const Domain& D);

// Smallest gap of the site, i.e. the boundary distance along the catalog
// structure.
double site_min_gap(const Site& s);

struct Atom {
  Point y0;
  double mass = 1.0;
};

struct Density {
  std::function<double(const Site&)> f;
  std::string label;
  // Known boundedness; unset means "probe numerically".
  std::optional<bool> bounded;
};

// Signed initial measure: a sum of atoms and densities.
class InitialMeasure {
 public:
  InitialMeasure() = default;
  static InitialMeasure atom(Point y0, double mass = 1.0);
  static InitialMeasure density(std::function<double(const Site&)> f, std::string label = "custom",
                                std::optional<bool> bounded = std::nullopt);
  static InitialMeasure sum(const std::vector<InitialMeasure>& parts);

  // Built-in densities.
  static InitialMeasure uniform(double value = 1.0);
  // scale * prod_i [lo_i * hi_i]^{-exponent}; on the interval (0,L) this is
  // scale * [x(L-x)]^{-exponent}.
  static InitialMeasure gap_product_power(double exponent, double scale = 1.0);
  // scale * prod_i sin(pi x_i / L)^{-exponent} for Interval/Box of side L.
  static InitialMeasure sin_power(double L, double exponent, double scale = 1.0);
  // |x|^{-b0} (R - |x|)^{-b1} on a ball.
  static InitialMeasure ball_power(double b0, double b1, double scale = 1.0);
  // |x|^{b0} (|x| - R1)^{-b1} (R2 - |x|)^{-b2} on an annulus.
  static InitialMeasure annulus_power(double R1, double b0, double b1, double b2,
                                      double scale = 1.0);

  const std::vector<Atom>& atoms() const { return atoms_; }
  const std::vector<Density>& densities() const { return densities_; }
  bool empty() const { return atoms_.empty() && densities_.empty(); }

  // Sum of the density parts at a site (signed).
  double density_at(const Site& s) const;
  // Sum of |density| parts at a site.
  double abs_density_at(const Site& s) const;

  void check_support(const Domain& D) const;

 private:
  std::vector<Atom> atoms_;
  std::vector<Density> densities_;
};

struct QuadValue {
  double value = 0.0;
  bool finite = true;
};

// ∫_{U_eps} F(site) dy by nested double-exponential quadrature over the
// catalog structure. `focus` adds breakpoints at its coordinates (for kernels
// peaked there). Ball integration supports d <= 3.
quad::Result integrate_domain(const Domain& D, double eps, const std::function<double(const Site&)>& F,
                              double rel_tol = 1e-9, const Point* focus = nullptr,
                              int max_level = 8);

// ∫ w d|nu| over U_eps for a nonnegative weight w. Atoms outside U_eps are
// skipped.
QuadValue integrate_abs_measure(const Domain& D, const InitialMeasure& nu, double eps,
                                const std::function<double(const Site&)>& w,
                                double rel_tol = 1e-9, const Point* focus = nullptr);

// |nu|(U).
QuadValue total_variation(const Domain& D, const InitialMeasure& nu);

// True if every density part is bounded (declared or probed near the
// boundary).
bool has_bounded_density(const Domain& D, const InitialMeasure& nu);

}  // namespace spde
