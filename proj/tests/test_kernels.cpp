#include <cmath>
#include <random>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "doctest.h"
#include "matchlab/error.hpp"
#include "matchlab/kernels.hpp"
#include "matchlab/special.hpp"

using namespace matchlab;

namespace {

const KernelConfig cfg{};
constexpr double pi = special::kPi;

// Gaussian images out to a distance of 12 standard deviations.
double image_sum(double t, Vec2 x) {
  const int K = 1 + static_cast<int>(std::ceil(12.0 * std::sqrt(2.0 * t)));
  double s = 0.0;
  for (int a = -K; a <= K; ++a) {
    for (int b = -K; b <= K; ++b) {
      const double d1 = x.x1 + a, d2 = x.x2 + b;
      s += std::exp(-(d1 * d1 + d2 * d2) / (4.0 * t));
    }
  }
  return s / (4.0 * pi * t);
}

// Sum over k != 0 of weight(|k|^2) cos(2 pi k.x) for |k_i| <= K.
template <class W>
double mode_sum(int K, Vec2 x, W weight) {
  double s = 0.0;
  for (int a = -K; a <= K; ++a) {
    for (int b = -K; b <= K; ++b) {
      if (a == 0 && b == 0) continue;
      s += weight(static_cast<double>(a * a + b * b)) * std::cos(2.0 * pi * (a * x.x1 + b * x.x2));
    }
  }
  return s;
}

struct Draw {
  std::mt19937_64 gen{2024};
  std::uniform_real_distribution<double> u{0.0, 1.0};
  Vec2 point() { return {u(gen) - 0.5, u(gen) - 0.5}; }
  double log_time(double lo, double hi) { return lo * std::pow(hi / lo, u(gen)); }
};

}  // namespace

TEST_CASE("heat time and config validation") {
  CHECK_THROWS_AS(heat_kernel(HeatTime(0.0), {0.1, 0.1}, cfg), DomainError);
  CHECK_THROWS_AS(HeatTime(-1.0), DomainError);
  CHECK_THROWS_AS(HeatTime(std::nan("")), DomainError);
  KernelConfig bad;
  bad.target_accuracy = 1e-3;
  CHECK_THROWS_AS(bad.validate(), InvalidArgument);
  bad = {};
  bad.crossover_time = 1.5;
  CHECK_THROWS_AS(bad.validate(), InvalidArgument);
  CHECK_NOTHROW(cfg.validate());
}

TEST_CASE("heat kernel: long time, representations, mass") {
  CHECK(heat_kernel(HeatTime(10.0), {0.3, -0.2}, cfg) == doctest::Approx(1.0).epsilon(1e-12));
  const Vec2 x{0.3, 0.4};
  const HeatTime t(0.01);
  CHECK(std::abs(heat_kernel_fourier(t, x, cfg) - heat_kernel_images(t, x, cfg)) <= 1e-10);
  CHECK(std::abs(heat_kernel(t, x, cfg) - image_sum(0.01, x)) <= 1e-10);

  const int m = 256;
  double mass = 0.0;
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < m; ++j) mass += heat_kernel(HeatTime(0.05), {(i + 0.5) / m, (j + 0.5) / m}, cfg);
  }
  CHECK(std::abs(mass / (m * m) - 1.0) <= 1e-8);

  Draw d;
  for (int k = 0; k < 100; ++k) {
    const double s = d.log_time(1e-4, 1.0);
    const Vec2 y = d.point();
    CHECK(std::abs(heat_kernel(HeatTime(s), y, cfg) - image_sum(s, y)) <= 1e-10 * std::max(1.0, image_sum(s, y)));
  }
}

TEST_CASE("q kernel: decay, zero mean, time quadrature oracle") {
  CHECK(std::abs(q_kernel(HeatTime(10.0), {0, 0}, cfg)) <= 1e-10);
  CHECK(std::abs(q_zero_at_origin(HeatTime(10.0), cfg)) <= 1e-10);

  const int m = 256;
  double mean = 0.0;
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < m; ++j) mean += q_kernel(HeatTime(0.02), {(i + 0.5) / m, (j + 0.5) / m}, cfg);
  }
  CHECK(std::abs(mean / (m * m)) <= 1e-8);

  const Vec2 x{0.1, 0.2};
  const double T = 1.0;
  auto p_minus_one = [&](double s) {
    return mode_sum(12, x, [&](double k2) { return std::exp(-4.0 * pi * pi * k2 * s); });
  };
  const double body =
      boost::math::quadrature::gauss_kronrod<double, 61>::integrate(p_minus_one, 0.02, T, 15, 1e-14);
  const double tail =
      mode_sum(4, x, [&](double k2) { return std::exp(-4.0 * pi * pi * k2 * T) / (4.0 * pi * pi * k2); });
  CHECK(std::abs(q_kernel(HeatTime(0.02), x, cfg) - (body + tail)) <= 1e-8);
}

TEST_CASE("q at the origin matches a refined Fourier sum") {
  KernelConfig cfg;
  cfg.target_accuracy = 1e-13;
  for (double t : {0.5, 0.1, 0.03, 0.01}) {
    const double refined = q_kernel_fourier(HeatTime(t), {0, 0}, cfg, 2);
    CHECK(std::abs(q_zero_at_origin(HeatTime(t), cfg) - refined) <= 1e-12);
    // Written out with the half-time exponent.
    const double direct = mode_sum(40, {0, 0}, [&](double k2) {
      return std::exp(-8.0 * pi * pi * k2 * (t / 2.0)) / (4.0 * pi * pi * k2);
    });
    CHECK(std::abs(q_zero_at_origin(HeatTime(t), cfg) - direct) <= 1e-12);
  }
  CHECK(q_zero_at_origin(HeatTime(1e-6), cfg) > q_zero_at_origin(HeatTime(1e-5), cfg));
}

TEST_CASE("q is even, its gradient odd, consistent with finite differences") {
  Draw d;
  CHECK(grad_q(HeatTime(0.01), {0, 0}, cfg).norm() <= 1e-14);
  double worst_grad = 0.0, worst_hess = 0.0, worst_lap = 0.0;
  for (int k = 0; k < 50; ++k) {
    const HeatTime t(d.log_time(1e-3, 1.0));
    const Vec2 x = d.point();
    CHECK(q_kernel(t, x, cfg) == doctest::Approx(q_kernel(t, -x, cfg)).epsilon(1e-12));
    const Vec2 g = grad_q(t, x, cfg), gm = grad_q(t, -x, cfg);
    CHECK(std::abs(g.x1 + gm.x1) <= 1e-12 * std::max(1.0, g.norm()));
    CHECK(std::abs(g.x2 + gm.x2) <= 1e-12 * std::max(1.0, g.norm()));

    const double h = 1e-5;
    const double f1 = (q_kernel(t, {x.x1 + h, x.x2}, cfg) - q_kernel(t, {x.x1 - h, x.x2}, cfg)) / (2 * h);
    const double f2 = (q_kernel(t, {x.x1, x.x2 + h}, cfg) - q_kernel(t, {x.x1, x.x2 - h}, cfg)) / (2 * h);
    worst_grad = std::max({worst_grad, std::abs(f1 - g.x1), std::abs(f2 - g.x2)});

    const Sym2 H = hess_q(t, x, cfg);
    const Vec2 a = grad_q(t, {x.x1 + h, x.x2}, cfg), b = grad_q(t, {x.x1 - h, x.x2}, cfg);
    const Vec2 c = grad_q(t, {x.x1, x.x2 + h}, cfg), e = grad_q(t, {x.x1, x.x2 - h}, cfg);
    const double hxx = (a.x1 - b.x1) / (2 * h), hxy = (c.x1 - e.x1) / (2 * h);
    const double hyx = (a.x2 - b.x2) / (2 * h), hyy = (c.x2 - e.x2) / (2 * h);
    const double scale = std::max(1.0, std::abs(H.xx) + std::abs(H.yy));
    worst_hess = std::max({worst_hess, std::abs(hxx - H.xx) / scale, std::abs(hxy - H.xy) / scale,
                           std::abs(hyx - H.xy) / scale, std::abs(hyy - H.yy) / scale});

    worst_lap = std::max(worst_lap, std::abs(H.trace() + heat_kernel(t, x, cfg) - 1.0));

    const QParts parts = q_parts(t, x, cfg);
    // Each order picks its own truncation, so agreement is at the target accuracy.
    CHECK(std::abs(parts.value - q_kernel(t, x, cfg)) <= 1e-10);
    CHECK(std::abs(parts.grad.x1 - g.x1) <= 1e-10 * std::max(1.0, g.norm()));
  }
  CHECK(worst_grad <= 1e-6);
  CHECK(worst_hess <= 1e-5);
  CHECK(worst_lap <= 1e-8);
  CHECK(hess_q(HeatTime(0.01), {0.23, 0.0}, cfg).xy == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("Green gradient: singularity, symmetry, small-time limit") {
  double C = 0.0;
  Draw d;
  for (int k = 0; k < 50; ++k) {
    Vec2 x = d.point() * 0.1;
    if (x.norm() < 1e-4) continue;
    const Vec2 g = green_gradient(x, cfg);
    const double r2 = x.norm_sq();
    const Vec2 sing{-x.x1 / (2 * pi * r2), -x.x2 / (2 * pi * r2)};
    C = std::max(C, (g - sing).norm() / x.norm());
    const Vec2 gm = green_gradient(-x, cfg);
    CHECK((g + gm).norm() <= 1e-10 * g.norm());
  }
  MESSAGE("singular remainder constant C = " << C);
  CHECK(C < 1.0);
  CHECK_THROWS_AS(green_gradient({0, 0}, cfg), DomainError);

  const Vec2 x{0.3, 0.1};
  CHECK((grad_q(HeatTime(1e-7), x, cfg) - green_gradient(x, cfg)).norm() <= 1e-4);
}

TEST_CASE("mollifier and mollified Green gradient") {
  CHECK(mollifier({1.0, 0.0}) == 0.0);
  CHECK(mollifier({0.0, 0.0}) > 0.0);
  CHECK(mollifier_mass(1.0) == doctest::Approx(1.0));
  CHECK(mollifier_mass(0.0) == 0.0);
  CHECK(mollifier_mass(0.5) < 1.0);

  const double r = 0.05;
  CHECK(mollified_green_gradient(r, {0, 0}, cfg).norm() <= 1e-14);

  double C = 0.0;
  for (double rad : {0.15, 0.2, 0.3, 0.45}) {
    for (double ang : {0.3, 1.1, 2.5}) {
      const Vec2 z{rad * std::cos(ang), rad * std::sin(ang)};
      const Vec2 diff = mollified_green_gradient(r, z, cfg) - green_gradient(z, cfg);
      C = std::max(C, diff.norm() * z.norm_sq() / r);
    }
  }
  MESSAGE("far-field constant C = " << C);
  CHECK(C < 1.0);

  for (const Vec2 z : {Vec2{0.01, 0.02}, Vec2{0.04, -0.01}, Vec2{0.2, 0.1}}) {
    const Vec2 q1 = mollified_green_gradient_quadrature(r, z, cfg, 1);
    const Vec2 q2 = mollified_green_gradient_quadrature(r, z, cfg, 2);
    CHECK((q1 - q2).norm() < 1e-7);
    CHECK((mollified_green_gradient(r, z, cfg) - q2).norm() < 1e-7);
  }
  CHECK_THROWS_AS(mollified_green_gradient(0.5, {0.1, 0.1}, cfg), InvalidArgument);
}

TEST_CASE("kernel inequality report") {
  const std::vector<double> times{1.0 / 256, 1.0 / 1024, 1.0 / 4096, 1.0 / 16384, 0.003};
  const auto rows = kernel_inequality_report(times, cfg);
  REQUIRE(rows.size() == times.size());
  double lo = 1e300, hi = 0.0, top = 0.0;
  for (const auto& row : rows) {
    CHECK(row.fourth_moment_scaled > 0.0);
    CHECK(row.sup_scaled > 0.0);
    CHECK(row.change_kernel_energy > 0.0);
    CHECK(std::isfinite(row.change_kernel_energy));
    lo = std::min(lo, row.fourth_moment_scaled);
    hi = std::max(hi, row.fourth_moment_scaled);
    top = std::max(top, row.change_kernel_energy);
  }
  MESSAGE("t * int |grad q_t|^4 in [" << lo << ", " << hi << "], mollifier gap <= " << top);
  CHECK(hi / lo < 3.0);
  const auto at = kernel_inequality_report(std::vector<double>{0.01}, cfg);
  CHECK(at[0].fourth_moment_scaled > 0.0);
  CHECK(at[0].sup_scaled > 0.0);
  CHECK(at[0].change_kernel_energy > 0.0);
  CHECK_THROWS_AS(kernel_inequality_report(std::vector<double>{0.5}, cfg), InvalidArgument);
}
