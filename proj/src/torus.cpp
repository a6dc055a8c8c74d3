#include "matchlab/torus.hpp"

#include "matchlab/error.hpp"

namespace matchlab {

double wrap_unit(double x) {
  double r = x - std::floor(x);
  // x slightly below an integer can round up to exactly 1.
  if (r >= 1.0) r = 0.0;
  return r;
}

double wrap_centered(double x) {
  double r = x - std::floor(x + 0.5);
  if (r >= 0.5) r -= 1.0;
  if (r < -0.5) r += 1.0;
  return r;
}

TorusPoint TorusPoint::wrap(Vec2 p) {
  if (!std::isfinite(p.x1) || !std::isfinite(p.x2)) {
    throw InvalidArgument("TorusPoint::wrap: non-finite coordinate");
  }
  return TorusPoint(wrap_unit(p.x1), wrap_unit(p.x2));
}

Displacement Displacement::reduce(Vec2 v) {
  if (!std::isfinite(v.x1) || !std::isfinite(v.x2)) {
    throw InvalidArgument("Displacement::reduce: non-finite component");
  }
  return Displacement(wrap_centered(v.x1), wrap_centered(v.x2));
}

Displacement nearest_image(const TorusPoint& a, const TorusPoint& b) {
  return Displacement::reduce(a.vec() - b.vec());
}

double dist_sq(const TorusPoint& a, const TorusPoint& b) {
  return nearest_image(a, b).norm_sq();
}

bool in_ball(const TorusPoint& p, const TorusPoint& center, double r) {
  if (!(r > 0.0 && r <= 0.5)) {
    throw InvalidArgument("in_ball: radius must lie in (0, 1/2]");
  }
  return dist_sq(p, center) < r * r;
}

TorusPoint translate(const TorusPoint& a, Vec2 v) { return TorusPoint::wrap(a.vec() + v); }

}  // namespace matchlab
