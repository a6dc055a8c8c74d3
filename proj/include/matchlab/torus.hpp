#pragma once

#include <cmath>

namespace matchlab {

/// Plain 2-vector used for raw coordinates, gradients and displacements in
/// the covering plane.
struct Vec2 {
  double x1 = 0.0;
  double x2 = 0.0;

  constexpr Vec2 operator+(Vec2 o) const { return {x1 + o.x1, x2 + o.x2}; }
  constexpr Vec2 operator-(Vec2 o) const { return {x1 - o.x1, x2 - o.x2}; }
  constexpr Vec2 operator-() const { return {-x1, -x2}; }
  constexpr Vec2 operator*(double s) const { return {x1 * s, x2 * s}; }
  constexpr Vec2& operator+=(Vec2 o) {
    x1 += o.x1;
    x2 += o.x2;
    return *this;
  }
  constexpr double dot(Vec2 o) const { return x1 * o.x1 + x2 * o.x2; }
  constexpr double norm_sq() const { return x1 * x1 + x2 * x2; }
  double norm() const { return std::sqrt(norm_sq()); }
  constexpr bool operator==(const Vec2&) const = default;
};

/// Symmetric 2x2 matrix.
struct Sym2 {
  double xx = 0.0;
  double xy = 0.0;
  double yy = 0.0;

  constexpr Sym2& operator+=(const Sym2& o) {
    xx += o.xx;
    xy += o.xy;
    yy += o.yy;
    return *this;
  }
  constexpr Sym2 operator*(double s) const { return {xx * s, xy * s, yy * s}; }
  constexpr double trace() const { return xx + yy; }
  /// Largest absolute eigenvalue.
  double spectral_norm() const {
    const double half_trace = 0.5 * (xx + yy);
    const double half_diff = 0.5 * (xx - yy);
    return std::abs(half_trace) + std::sqrt(half_diff * half_diff + xy * xy);
  }
};

/// Point of the flat torus (R/Z)^2, coordinates in [0,1).
class TorusPoint {
 public:
  constexpr TorusPoint() = default;

  /// Reduces both coordinates mod 1. Throws InvalidArgument on non-finite input.
  static TorusPoint wrap(Vec2 p);
  static TorusPoint wrap(double x1, double x2) { return wrap(Vec2{x1, x2}); }

  constexpr double x1() const { return x1_; }
  constexpr double x2() const { return x2_; }
  constexpr Vec2 vec() const { return {x1_, x2_}; }
  constexpr bool operator==(const TorusPoint&) const = default;

 private:
  constexpr TorusPoint(double a, double b) : x1_(a), x2_(b) {}
  double x1_ = 0.0;
  double x2_ = 0.0;
};

/// Geodesic representative of a difference of torus points, components in
/// [-1/2, 1/2). Ties at +-1/2 resolve to -1/2.
class Displacement {
 public:
  constexpr Displacement() = default;

  /// Reduces an arbitrary plane vector to its representative.
  static Displacement reduce(Vec2 v);

  constexpr double v1() const { return v1_; }
  constexpr double v2() const { return v2_; }
  constexpr Vec2 vec() const { return {v1_, v2_}; }
  constexpr double norm_sq() const { return v1_ * v1_ + v2_ * v2_; }
  constexpr bool operator==(const Displacement&) const = default;

 private:
  constexpr Displacement(double a, double b) : v1_(a), v2_(b) {}
  double v1_ = 0.0;
  double v2_ = 0.0;
};

/// Reduce a real into [0,1).
double wrap_unit(double x);
/// Reduce a real into [-1/2,1/2).
double wrap_centered(double x);

/// Representative of a - b with minimal Euclidean norm.
Displacement nearest_image(const TorusPoint& a, const TorusPoint& b);

/// Squared geodesic distance.
double dist_sq(const TorusPoint& a, const TorusPoint& b);

/// Membership in the open geodesic ball of radius r, 0 < r <= 1/2.
bool in_ball(const TorusPoint& p, const TorusPoint& center, double r);

/// a (+) v: wrap of the sum.
TorusPoint translate(const TorusPoint& a, Vec2 v);

}  // namespace matchlab
