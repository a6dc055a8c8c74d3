#include "matchlab/kernels.hpp"

#include <cmath>
#include <string>
#include <vector>

#include "matchlab/error.hpp"

namespace matchlab {

using special::kPi;

namespace {

constexpr double kFourPiSq = 4.0 * kPi * kPi;

// Smallest R >= 0 with sum_{j > R} bound(j) <= acc. bound must eventually
// decay like a Gaussian in j.
template <class Bound>
int truncation_radius(Bound&& bound, double acc, int max_modes, const char* what) {
  std::vector<double> terms;
  double prev = 0.0;
  for (int j = 1;; ++j) {
    const double b = bound(j);
    terms.push_back(b);
    if (b < 1e-4 * acc && b <= prev) break;
    prev = b;
    if (j > max_modes + 1) {
      throw AccuracyError(std::string(what) + ": truncation radius exceeds max_modes=" +
                          std::to_string(max_modes) + " (still " + std::to_string(b) +
                          " per shell at j=" + std::to_string(j) + ")");
    }
  }
  double tail = 0.0;
  int radius = static_cast<int>(terms.size());
  for (int j = static_cast<int>(terms.size()); j >= 1; --j) {
    tail += terms[static_cast<std::size_t>(j - 1)];
    if (tail > acc) break;
    radius = j - 1;
  }
  if (radius > max_modes) {
    throw AccuracyError(std::string(what) + ": needs radius " + std::to_string(radius) +
                        " > max_modes=" + std::to_string(max_modes));
  }
  return radius;
}

double require_positive(HeatTime t, const char* what) {
  if (!(t.value() > 0.0)) throw DomainError(std::string(what) + ": requires t > 0");
  return t.value();
}

// 1-D theta factors; p_t(x) = theta(x1) theta(x2).
double theta_fourier(double x, double s, int k_max) {
  double sum = 1.0;
  for (int k = 1; k <= k_max; ++k) {
    sum += 2.0 * std::exp(-kFourPiSq * k * k * s) * std::cos(2.0 * kPi * k * x);
  }
  return sum;
}

double theta_images(double x, double s, int m_max) {
  double sum = 0.0;
  for (int m = -m_max; m <= m_max; ++m) {
    const double z = x + m;
    sum += std::exp(-z * z / (4.0 * s));
  }
  return sum / std::sqrt(4.0 * kPi * s);
}

int theta_fourier_radius(double s, double acc, int max_modes) {
  return truncation_radius([&](int j) { return 2.0 * std::exp(-kFourPiSq * j * j * s); }, acc,
                           max_modes, "heat kernel (Fourier)");
}

int theta_image_radius(double s, double acc, int max_modes) {
  const double pre = 2.0 / std::sqrt(4.0 * kPi * s);
  return truncation_radius(
      [&](int j) {
        const double r = j - 0.5;
        return pre * std::exp(-r * r / (4.0 * s));
      },
      acc, max_modes, "heat kernel (images)");
}

// Per-factor accuracy so that the product of two factors meets acc.
double factor_accuracy(double s, double acc) {
  const double peak = 1.0 + 1.0 / std::sqrt(4.0 * kPi * s);
  return acc / (4.0 * peak);
}

// Fourier part of q at time s: sum_{k != 0} e^{-4pi^2|k|^2 s}/(4pi^2|k|^2) e^{2pi i k.x}
// and derivatives, truncated to |k|_inf <= k_max.
void add_fourier_q(double s, Vec2 x, int k_max, int order, QParts& out) {
  const std::size_t len = static_cast<std::size_t>(k_max) + 1;
  std::vector<double> c1(len), s1(len), c2(len), s2(len), g(len);
  for (int k = 0; k <= k_max; ++k) {
    const std::size_t i = static_cast<std::size_t>(k);
    c1[i] = std::cos(2.0 * kPi * k * x.x1);
    s1[i] = std::sin(2.0 * kPi * k * x.x1);
    c2[i] = std::cos(2.0 * kPi * k * x.x2);
    s2[i] = std::sin(2.0 * kPi * k * x.x2);
    g[i] = std::exp(-kFourPiSq * k * k * s);
  }
  double value = 0.0;
  double g1 = 0.0, g2 = 0.0;
  double hxx = 0.0, hxy = 0.0, hyy = 0.0;
  // Half lattice: k1 > 0 with any k2, or k1 = 0 with k2 > 0; each counted twice.
  for (int k1 = 0; k1 <= k_max; ++k1) {
    const std::size_t i1 = static_cast<std::size_t>(k1);
    for (int k2 = (k1 == 0 ? 1 : -k_max); k2 <= k_max; ++k2) {
      const std::size_t i2 = static_cast<std::size_t>(k2 < 0 ? -k2 : k2);
      const double sign2 = k2 < 0 ? -1.0 : 1.0;
      const double ksq = static_cast<double>(k1) * k1 + static_cast<double>(k2) * k2;
      const double w = 2.0 * g[i1] * g[i2] / (kFourPiSq * ksq);
      const double cosv = c1[i1] * c2[i2] - s1[i1] * s2[i2] * sign2;
      value += w * cosv;
      if (order >= 1) {
        const double sinv = s1[i1] * c2[i2] + c1[i1] * s2[i2] * sign2;
        g1 -= w * 2.0 * kPi * k1 * sinv;
        g2 -= w * 2.0 * kPi * k2 * sinv;
      }
      if (order >= 2) {
        hxx -= w * kFourPiSq * k1 * k1 * cosv;
        hxy -= w * kFourPiSq * k1 * k2 * cosv;
        hyy -= w * kFourPiSq * k2 * k2 * cosv;
      }
    }
  }
  out.value += value;
  out.grad += Vec2{g1, g2};
  out.hess += Sym2{hxx, hxy, hyy};
}

int fourier_q_radius(double s, int order, double acc, int max_modes) {
  return truncation_radius(
      [&](int j) {
        const double kj = 2.0 * kPi * j;
        return 8.0 * j * std::pow(kj, order) * std::exp(-kFourPiSq * j * j * s) / (kj * kj);
      },
      acc, max_modes, "q kernel (Fourier)");
}

// Tail bound for the image sum of psi(|z|^2) = (E1(|z|^2/4T) - E1(|z|^2/4t))/(4 pi)
// and its derivatives; t == 0 drops the second exponential.
int image_q_radius(double t, double big_t, int order, double acc, int max_modes) {
  auto one = [&](double s, double r) {
    if (s <= 0.0) return 0.0;
    const double u = r * r / (4.0 * s);
    const double e = std::exp(-u);
    switch (order) {
      case 0: return e / (4.0 * kPi * u);
      case 1: return e / (2.0 * kPi * r);
      default: return e * (6.0 / (r * r) + 1.0 / s) / (4.0 * kPi);
    }
  };
  return truncation_radius(
      [&](int j) {
        const double r = j - 0.5;
        return 8.0 * j * (one(big_t, r) + one(t, r));
      },
      acc, max_modes, "q kernel (images)");
}

enum class ImageMode { Full, Green, GreenRegular };

// Image part of the Ewald split over [t, T]. For Green modes t = 0.
void add_images_q(double t, double big_t, Vec2 x, int m_max, int order, ImageMode mode,
                  QParts& out) {
  const double inv4pi = 1.0 / (4.0 * kPi);
  for (int m1 = -m_max; m1 <= m_max; ++m1) {
    for (int m2 = -m_max; m2 <= m_max; ++m2) {
      const Vec2 z{x.x1 + m1, x.x2 + m2};
      const double a = z.norm_sq();
      const bool centre = (m1 == 0 && m2 == 0);
      if (mode == ImageMode::Full && order != 1) {
        out.value += inv4pi * special::e1_difference(a / 4.0, t, big_t);
      }
      if (order == 0) continue;
      double d1 = special::ein_d1(a / (4.0 * big_t)) / (4.0 * big_t);
      double d2 = special::ein_d2(a / (4.0 * big_t)) / (16.0 * big_t * big_t);
      if (mode == ImageMode::Full) {
        d1 -= special::ein_d1(a / (4.0 * t)) / (4.0 * t);
        d2 -= special::ein_d2(a / (4.0 * t)) / (16.0 * t * t);
      } else if (!(mode == ImageMode::GreenRegular && centre)) {
        d1 -= 1.0 / a;
        d2 += 1.0 / (a * a);
      }
      d1 *= inv4pi;
      d2 *= inv4pi;
      if (order >= 1) out.grad += z * (2.0 * d1);
      if (order >= 2) {
        out.hess += Sym2{2.0 * d1 + 4.0 * d2 * z.x1 * z.x1, 4.0 * d2 * z.x1 * z.x2,
                         2.0 * d1 + 4.0 * d2 * z.x2 * z.x2};
      }
    }
  }
}

Vec2 reduced(Vec2 x) { return Displacement::reduce(x).vec(); }

QParts q_parts_order(double t, Vec2 x, const KernelConfig& cfg, int order) {
  cfg.validate();
  x = reduced(x);
  QParts out;
  const double acc = cfg.target_accuracy;
  if (t >= cfg.crossover_time) {
    add_fourier_q(t, x, fourier_q_radius(t, order, acc, cfg.max_modes), order, out);
    return out;
  }
  const double big_t = t + cfg.ewald_sigma;
  add_fourier_q(big_t, x, fourier_q_radius(big_t, order, 0.5 * acc, cfg.max_modes), order, out);
  add_images_q(t, big_t, x, image_q_radius(t, big_t, order, 0.5 * acc, cfg.max_modes), order,
               ImageMode::Full, out);
  out.value -= big_t - t;
  return out;
}

Vec2 green_gradient_impl(Vec2 x, const KernelConfig& cfg, ImageMode mode) {
  cfg.validate();
  x = reduced(x);
  QParts out;
  const double sigma = cfg.ewald_sigma;
  const double acc = cfg.target_accuracy;
  add_fourier_q(sigma, x, fourier_q_radius(sigma, 1, 0.5 * acc, cfg.max_modes), 1, out);
  add_images_q(0.0, sigma, x, image_q_radius(0.0, sigma, 1, 0.5 * acc, cfg.max_modes), 1, mode,
               out);
  return out.grad;
}

}  // namespace

void KernelConfig::validate() const {
  if (!(target_accuracy > 0.0 && target_accuracy <= 1e-6)) {
    throw InvalidArgument("KernelConfig: target_accuracy must lie in (0, 1e-6]");
  }
  if (!(crossover_time > 0.0 && crossover_time < 1.0)) {
    throw InvalidArgument("KernelConfig: crossover_time must lie in (0, 1)");
  }
  if (!(ewald_sigma > 0.0 && ewald_sigma < 1.0)) {
    throw InvalidArgument("KernelConfig: ewald_sigma must lie in (0, 1)");
  }
  if (max_modes < 1) throw InvalidArgument("KernelConfig: max_modes must be positive");
}

HeatTime::HeatTime(double t) : t_(t) {
  if (!std::isfinite(t) || t < 0.0) throw DomainError("HeatTime: t must be finite and >= 0");
}

double heat_kernel_fourier(HeatTime t, Vec2 x, const KernelConfig& cfg) {
  const double s = require_positive(t, "heat_kernel");
  cfg.validate();
  x = reduced(x);
  const int k = theta_fourier_radius(s, factor_accuracy(s, cfg.target_accuracy), cfg.max_modes);
  return theta_fourier(x.x1, s, k) * theta_fourier(x.x2, s, k);
}

double heat_kernel_images(HeatTime t, Vec2 x, const KernelConfig& cfg) {
  const double s = require_positive(t, "heat_kernel");
  cfg.validate();
  x = reduced(x);
  const int m = theta_image_radius(s, factor_accuracy(s, cfg.target_accuracy), cfg.max_modes);
  return theta_images(x.x1, s, m) * theta_images(x.x2, s, m);
}

double heat_kernel(HeatTime t, Vec2 x, const KernelConfig& cfg) {
  const double s = require_positive(t, "heat_kernel");
  return s < cfg.crossover_time ? heat_kernel_images(t, x, cfg) : heat_kernel_fourier(t, x, cfg);
}

QParts q_parts(HeatTime t, Vec2 x, const KernelConfig& cfg) {
  return q_parts_order(require_positive(t, "q_parts"), x, cfg, 2);
}

double q_kernel(HeatTime t, Vec2 x, const KernelConfig& cfg) {
  return q_parts_order(require_positive(t, "q_kernel"), x, cfg, 0).value;
}

Vec2 grad_q(HeatTime t, Vec2 x, const KernelConfig& cfg) {
  return q_parts_order(require_positive(t, "grad_q"), x, cfg, 1).grad;
}

Sym2 hess_q(HeatTime t, Vec2 x, const KernelConfig& cfg) {
  return q_parts_order(require_positive(t, "hess_q"), x, cfg, 2).hess;
}

double q_zero_at_origin(HeatTime t, const KernelConfig& cfg) { return q_kernel(t, Vec2{}, cfg); }

double q_kernel_fourier(HeatTime t, Vec2 x, const KernelConfig& cfg, int radius_scale) {
  const double s = require_positive(t, "q_kernel_fourier");
  cfg.validate();
  x = reduced(x);
  const int k = fourier_q_radius(s, 0, cfg.target_accuracy, cfg.max_modes) * radius_scale;
  if (k > cfg.max_modes * radius_scale) throw AccuracyError("q_kernel_fourier: radius too large");
  QParts out;
  add_fourier_q(s, x, k, 0, out);
  return out.value;
}

Vec2 green_gradient(Vec2 x, const KernelConfig& cfg) {
  const Vec2 r = reduced(x);
  if (r.x1 == 0.0 && r.x2 == 0.0) {
    throw DomainError("green_gradient: singular at the origin");
  }
  return green_gradient_impl(r, cfg, ImageMode::Green);
}

Vec2 green_gradient_regular(Vec2 x, const KernelConfig& cfg) {
  return green_gradient_impl(x, cfg, ImageMode::GreenRegular);
}

}  // namespace matchlab
