#include <boost/math/quadrature/gauss.hpp>
#include <cmath>
#include <algorithm>
#include <span>
#include <string>
#include <vector>

#include "matchlab/error.hpp"
#include "matchlab/kernels.hpp"

namespace matchlab {

using special::kPi;

namespace {

// Antiderivative of exp(-1/w): G(w) = w e^{-1/w} - E1(1/w), G(0) = 0.
double bump_antiderivative(double w) {
  if (w <= 0.0) return 0.0;
  return w * std::exp(-1.0 / w) - special::e1(1.0 / w);
}

// int_{1-v}^{1} exp(-1/w) dw
double bump_tail_integral(double v) {
  if (v < 1e-4) {
    const double e = std::exp(-1.0);
    return e * v * (1.0 - v * (0.5 + v / 6.0));
  }
  return bump_antiderivative(1.0) - bump_antiderivative(1.0 - v);
}

using GaussRule = boost::math::quadrature::gauss<double, 20>;
constexpr int kNodes = 10;  // positive abscissae of the 20-point rule

double gauss_node(int q) { return GaussRule::abscissa()[q]; }
double gauss_weight(int q) { return GaussRule::weights()[q]; }

// Gradient of the non-periodic regular part q_0(w) + log|w|/(2 pi) for
// |w| < 1, which may leave the centred fundamental cell.
Vec2 regular_plane_gradient(Vec2 w, const KernelConfig& cfg) {
  if (std::abs(w.x1) < 0.5 && std::abs(w.x2) < 0.5) return green_gradient_regular(w, cfg);
  return green_gradient(w, cfg) + w * (1.0 / (2.0 * kPi * w.norm_sq()));
}

void check_radius(double r, const char* what) {
  if (!(r > 0.0 && r <= 0.25)) {
    throw InvalidArgument(std::string(what) + ": mollifier radius must lie in (0, 1/4]");
  }
}

}  // namespace

double mollifier_normalization() {
  // int_{B_1} exp(-1/(1-|x|^2)) dx = pi * int_0^1 exp(-1/w) dw
  static const double c = 1.0 / (kPi * bump_antiderivative(1.0));
  return c;
}

double mollifier(Vec2 x) {
  const double r2 = x.norm_sq();
  if (r2 >= 1.0) return 0.0;
  return mollifier_normalization() * std::exp(-1.0 / (1.0 - r2));
}

double mollifier_mass(double s) {
  if (s <= 0.0) return 0.0;
  if (s >= 1.0) return 1.0;
  return kPi * mollifier_normalization() * bump_tail_integral(s * s);
}

Vec2 mollified_green_gradient(double r, Vec2 z, const KernelConfig& cfg) {
  check_radius(r, "mollified_green_gradient");
  const Vec2 x = Displacement::reduce(z).vec();
  const Vec2 regular = green_gradient_regular(x, cfg);
  const double a = x.norm_sq();
  if (a == 0.0) return regular;
  // Circle averages of -log|x - y|/(2 pi) over |y| = rho give
  // -log max(|x|, rho)/(2 pi); differentiating leaves the enclosed mass.
  const double enclosed = mollifier_mass(std::sqrt(a) / r);
  return regular - x * (enclosed / (2.0 * kPi * a));
}

Vec2 mollified_green_gradient_quadrature(double r, Vec2 z, const KernelConfig& cfg,
                                         int resolution) {
  check_radius(r, "mollified_green_gradient_quadrature");
  if (resolution < 1) throw InvalidArgument("quadrature resolution must be >= 1");
  const Vec2 x = Displacement::reduce(z).vec();
  const double a = x.norm_sq();
  const double inv_r = 1.0 / r;
  const double weight = mollifier_normalization() * inv_r * inv_r;

  // Polar coordinates around the singular point: y = x + rho e. The kernel
  // -(x - y)/(2 pi |x - y|^2) times the Jacobian rho leaves e/(2 pi).
  auto ray = [&](double theta) {
    const Vec2 e{std::cos(theta), std::sin(theta)};
    const double b = x.dot(e);
    const double disc = b * b - (a - r * r);
    Vec2 acc;
    if (disc <= 0.0) return acc;
    const double root = std::sqrt(disc);
    const double lo = std::max(0.0, -b - root);
    const double hi = -b + root;
    if (hi <= lo) return acc;
    const int pieces = 4 * resolution;
    const double h = (hi - lo) / pieces;
    for (int k = 0; k < pieces; ++k) {
      const double left = lo + k * h;
      auto integrand = [&](double rho) {
        const Vec2 y = x + e * rho;
        const double u = y.norm_sq() * inv_r * inv_r;
        if (u >= 1.0) return Vec2{};
        const double eta = weight * std::exp(-1.0 / (1.0 - u));
        return (e * (1.0 / (2.0 * kPi)) + regular_plane_gradient(e * (-rho), cfg) * rho) * eta;
      };
      for (int q = 0; q < kNodes; ++q) {
        const Vec2 lo_pt = integrand(left + 0.5 * h * (1.0 - gauss_node(q)));
        const Vec2 hi_pt = integrand(left + 0.5 * h * (1.0 + gauss_node(q)));
        acc += (lo_pt + hi_pt) * (0.5 * h * gauss_weight(q));
      }
    }
    return acc;
  };

  Vec2 total;
  if (a < r * r) {
    // Full circle: the integrand is smooth and periodic in theta.
    const int n_theta = 128 * resolution;
    const double dtheta = 2.0 * kPi / n_theta;
    for (int i = 0; i < n_theta; ++i) total += ray((i + 0.5) * dtheta) * dtheta;
  } else {
    // Only the cone of directions hitting the support ball contributes.
    const double centre = std::atan2(-x.x2, -x.x1);
    const double half = std::asin(std::min(1.0, r / std::sqrt(a)));
    const int pieces = 8 * resolution;
    const double h = 2.0 * half / pieces;
    for (int k = 0; k < pieces; ++k) {
      const double left = centre - half + k * h;
      for (int q = 0; q < kNodes; ++q) {
        const double w = 0.5 * h * gauss_weight(q);
        total += ray(left + 0.5 * h * (1.0 - gauss_node(q))) * w;
        total += ray(left + 0.5 * h * (1.0 + gauss_node(q))) * w;
      }
    }
  }
  return total;
}

std::vector<KernelInequalityRow> kernel_inequality_report(std::span<const double> times,
                                                          const KernelConfig& cfg,
                                                          int max_grid) {
  cfg.validate();
  std::vector<KernelInequalityRow> rows;
  rows.reserve(times.size());
  for (double t : times) {
    if (!(t >= 1e-5 && t <= 1.0 / 16.0)) {
      throw InvalidArgument("kernel_inequality_report: times must lie in [1e-5, 1/16]");
    }
    const double pitch = std::sqrt(t) / 8.0;
    int m = 64;
    while (1.0 / m > pitch) m *= 2;
    if (m > max_grid) {
      throw AccuracyError("kernel_inequality_report: t = " + std::to_string(t) + " needs a " +
                          std::to_string(m) + "^2 grid, limit is " + std::to_string(max_grid));
    }
    const HeatTime ht(t);
    const double r = std::sqrt(t);
    const int half = m / 2;
    // |grad q_t| and the change kernel are invariant under coordinate
    // reflections, so one quadrant of pixel centres suffices.
    std::vector<double> fourth(half), change(half), peak(half);
#pragma omp parallel for schedule(dynamic)
    for (int i = 0; i < half; ++i) {
      const double x1 = (i + 0.5) / m;
      double f4 = 0.0, ch = 0.0, mx = 0.0;
      for (int j = 0; j < half; ++j) {
        const Vec2 x{x1, (j + 0.5) / m};
        const Vec2 g = grad_q(ht, x, cfg);
        const double g2 = g.norm_sq();
        f4 += g2 * g2;
        mx = std::max(mx, g2);
        const Vec2 d = g - mollified_green_gradient(r, x, cfg);
        ch += d.norm_sq();
      }
      fourth[i] = f4;
      change[i] = ch;
      peak[i] = mx;
    }
    double f4 = 0.0, ch = 0.0, mx = 0.0;
    for (int i = 0; i < half; ++i) {
      f4 += fourth[i];
      ch += change[i];
      mx = std::max(mx, peak[i]);
    }
    const double cell = 4.0 / (static_cast<double>(m) * m);
    rows.push_back({t, t * f4 * cell, r * std::sqrt(mx), ch * cell, m});
  }
  return rows;
}

}  // namespace matchlab
