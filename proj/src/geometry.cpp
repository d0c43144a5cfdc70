#include "spde/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <sstream>

#include "spde/error.hpp"

namespace spde {

Domain Domain::interval(double L) {
  require(L > 0 && std::isfinite(L), "Interval: L must be positive");
  Domain D;
  D.kind_ = Kind::Interval;
  D.dim_ = 1;
  D.a_ = L;
  return D;
}

Domain Domain::box(int d, double L) {
  require(d >= 1, "Box: d must be >= 1");
  require(L > 0 && std::isfinite(L), "Box: L must be positive");
  Domain D;
  D.kind_ = Kind::Box;
  D.dim_ = d;
  D.a_ = L;
  return D;
}

Domain Domain::ball(int d, double R) {
  require(d >= 1, "Ball: d must be >= 1");
  require(R > 0 && std::isfinite(R), "Ball: R must be positive");
  Domain D;
  D.kind_ = Kind::Ball;
  D.dim_ = d;
  D.a_ = R;
  return D;
}

Domain Domain::annulus(double R1, double R2) {
  require(R1 > 0 && R2 > R1 && std::isfinite(R2), "Annulus: need 0 < R1 < R2");
  Domain D;
  D.kind_ = Kind::Annulus;
  D.dim_ = 2;
  D.a_ = R1;
  D.b_ = R2;
  return D;
}

Domain Domain::product(std::vector<Domain> factors) {
  require(!factors.empty(), "Product: needs at least one factor");
  Domain D;
  D.kind_ = Kind::Product;
  D.dim_ = 0;
  for (const auto& f : factors) D.dim_ += f.dim();
  D.factors_ = std::move(factors);
  return D;
}

double Domain::diameter() const {
  switch (kind_) {
    case Kind::Interval: return a_;
    case Kind::Box: return a_ * std::sqrt(double(dim_));
    case Kind::Ball: return 2 * a_;
    case Kind::Annulus: return 2 * b_;
    case Kind::Product: {
      double s = 0;
      for (const auto& f : factors_) s += f.diameter() * f.diameter();
      return std::sqrt(s);
    }
  }
  return 0;
}

double Domain::volume() const {
  const double pi = std::numbers::pi;
  switch (kind_) {
    case Kind::Interval: return a_;
    case Kind::Box: return std::pow(a_, dim_);
    case Kind::Ball:
      return std::pow(pi, dim_ / 2.0) / std::tgamma(dim_ / 2.0 + 1) * std::pow(a_, dim_);
    case Kind::Annulus: return pi * (b_ * b_ - a_ * a_);
    case Kind::Product: {
      double v = 1;
      for (const auto& f : factors_) v *= f.volume();
      return v;
    }
  }
  return 0;
}

std::string Domain::name() const {
  std::ostringstream os;
  switch (kind_) {
    case Kind::Interval: os << "Interval(" << a_ << ")"; break;
    case Kind::Box: os << "Box(" << dim_ << "," << a_ << ")"; break;
    case Kind::Ball: os << "Ball(" << dim_ << "," << a_ << ")"; break;
    case Kind::Annulus: os << "Annulus(" << a_ << "," << b_ << ")"; break;
    case Kind::Product:
      for (std::size_t i = 0; i < factors_.size(); ++i) os << (i ? "x" : "") << factors_[i].name();
      break;
  }
  return os.str();
}

Point Domain::lower_corner() const {
  switch (kind_) {
    case Kind::Interval:
    case Kind::Box: return Point(dim_, 0.0);
    case Kind::Ball: return Point(dim_, -a_);
    case Kind::Annulus: return Point(2, -b_);
    case Kind::Product: {
      Point p;
      for (const auto& f : factors_) {
        auto q = f.lower_corner();
        p.insert(p.end(), q.begin(), q.end());
      }
      return p;
    }
  }
  return {};
}

Point Domain::upper_corner() const {
  switch (kind_) {
    case Kind::Interval:
    case Kind::Box: return Point(dim_, a_);
    case Kind::Ball: return Point(dim_, a_);
    case Kind::Annulus: return Point(2, b_);
    case Kind::Product: {
      Point p;
      for (const auto& f : factors_) {
        auto q = f.upper_corner();
        p.insert(p.end(), q.begin(), q.end());
      }
      return p;
    }
  }
  return {};
}

void Domain::check_dim(const Point& x) const {
  if (int(x.size()) != dim_) {
    std::ostringstream os;
    os << "point of dimension " << x.size() << " queried against " << name() << " of dimension "
       << dim_;
    throw ValidationError(os.str());
  }
}

static double norm(const double* x, int d) {
  double s = 0;
  for (int i = 0; i < d; ++i) s += x[i] * x[i];
  return std::sqrt(s);
}

bool Domain::contains_unchecked(const double* x) const {
  switch (kind_) {
    case Kind::Interval:
    case Kind::Box:
      for (int i = 0; i < dim_; ++i)
        if (!(x[i] > 0 && x[i] < a_)) return false;
      return true;
    case Kind::Ball: return norm(x, dim_) < a_;
    case Kind::Annulus: {
      double r = norm(x, 2);
      return r > a_ && r < b_;
    }
    case Kind::Product: {
      int off = 0;
      for (const auto& f : factors_) {
        if (!f.contains_unchecked(x + off)) return false;
        off += f.dim();
      }
      return true;
    }
  }
  return false;
}

double Domain::dist_unchecked(const double* x) const {
  switch (kind_) {
    case Kind::Interval:
    case Kind::Box: {
      double m = a_;
      for (int i = 0; i < dim_; ++i) m = std::min({m, x[i], a_ - x[i]});
      return m;
    }
    case Kind::Ball: return a_ - norm(x, dim_);
    case Kind::Annulus: {
      double r = norm(x, 2);
      return std::min(r - a_, b_ - r);
    }
    case Kind::Product: {
      double m = INFINITY;
      int off = 0;
      for (const auto& f : factors_) {
        m = std::min(m, f.dist_unchecked(x + off));
        off += f.dim();
      }
      return m;
    }
  }
  return 0;
}

bool Domain::contains(const Point& x) const {
  check_dim(x);
  return contains_unchecked(x.data());
}

double Domain::dist_to_boundary(const Point& x) const {
  check_dim(x);
  if (!contains_unchecked(x.data())) throw ValidationError("dist_to_boundary: point outside " + name());
  return dist_unchecked(x.data());
}

bool Domain::inner_region_contains(double eps, const Point& x) const {
  require(eps >= 0, "inner_region_contains: eps must be >= 0");
  check_dim(x);
  if (!contains_unchecked(x.data())) return false;
  return dist_unchecked(x.data()) > eps;
}

std::vector<Point> Domain::split(const Point& x) const {
  check_dim(x);
  if (kind_ != Kind::Product) return {x};
  std::vector<Point> out;
  int off = 0;
  for (const auto& f : factors_) {
    out.emplace_back(x.begin() + off, x.begin() + off + f.dim());
    off += f.dim();
  }
  return out;
}

double Domain::vol_ball_cap(const Point& y, double r, double resolution) const {
  check_dim(y);
  require(r > 0, "vol_ball_cap: r must be positive");
  require(resolution > 0, "vol_ball_cap: resolution must be positive");
  if (kind_ == Kind::Interval) {
    double lo = std::max(0.0, y[0] - r), hi = std::min(a_, y[0] + r);
    return std::max(0.0, hi - lo);
  }
  const double h = resolution * diameter();
  auto lo = lower_corner(), hi = upper_corner();
  std::vector<long> n0(dim_), n1(dim_);
  double cells = 1;
  for (int i = 0; i < dim_; ++i) {
    double a = std::max(lo[i], y[i] - r), b = std::min(hi[i], y[i] + r);
    if (b <= a) return 0.0;
    n0[i] = long(std::floor((a - lo[i]) / h));
    n1[i] = long(std::ceil((b - lo[i]) / h));
    cells *= double(n1[i] - n0[i]);
  }
  require(cells <= 4e8, "vol_ball_cap: grid too fine, raise resolution");
  std::vector<long> idx(n0);
  Point p(dim_);
  const double r2 = r * r;
  long count = 0;
  while (true) {
    double d2 = 0;
    for (int i = 0; i < dim_; ++i) {
      p[i] = lo[i] + (idx[i] + 0.5) * h;
      d2 += (p[i] - y[i]) * (p[i] - y[i]);
    }
    if (d2 < r2 && contains_unchecked(p.data())) ++count;
    int k = 0;
    while (k < dim_ && ++idx[k] == n1[k]) {
      idx[k] = n0[k];
      ++k;
    }
    if (k == dim_) break;
  }
  return double(count) * std::pow(h, dim_);
}

bool Domain::operator==(const Domain& o) const {
  return kind_ == o.kind_ && dim_ == o.dim_ && a_ == o.a_ && b_ == o.b_ && factors_ == o.factors_;
}

double delta_cone_parameter(double K_U, double r0) {
  require(K_U > 0 && r0 > 0, "delta_cone_parameter: K_U and r0 must be positive");
  return std::min(std::atan(1.0 / K_U), r0);
}

}  // namespace spde
