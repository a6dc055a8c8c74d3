#include <cmath>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "doctest.h"
#include "matchlab/error.hpp"
#include "matchlab/field.hpp"
#include "matchlab/parallel.hpp"
#include "matchlab/spectral.hpp"

using namespace matchlab;

namespace {

const KernelConfig cfg{};

TorusPoint node(int i, int j, int m) { return TorusPoint::wrap((i + 0.5) / m, (j + 0.5) / m); }

PointSample single_at_origin() {
  PointSample s;
  s.points = {TorusPoint::wrap(0, 0)};
  return s;
}

}  // namespace

TEST_CASE("single site field is the kernel itself") {
  const PointSample s = single_at_origin();
  const HeatTime t(0.02);
  for (const TorusPoint y : {TorusPoint::wrap(0.1, 0.7), TorusPoint::wrap(0.45, 0.05)}) {
    const Vec2 d = nearest_image(y, s.points[0]).vec();
    const Vec2 g = grad_f(s, t, y, cfg), k = grad_q(t, d, cfg);
    CHECK(g.x1 == doctest::Approx(k.x1).epsilon(1e-14));
    CHECK(g.x2 == doctest::Approx(k.x2).epsilon(1e-14));
    CHECK(f_value(s, t, y, cfg) == doctest::Approx(q_kernel(t, -d, cfg)).epsilon(1e-14));
  }
  CHECK(dirichlet_energy(s, t, cfg) == doctest::Approx(q_zero_at_origin(HeatTime(0.04), cfg)).epsilon(1e-12));
  CHECK(pairing_value(s, t, cfg) == doctest::Approx(q_zero_at_origin(t, cfg)).epsilon(1e-12));
  CHECK(mollified_field_gradient(s, 0.05, TorusPoint::wrap(0, 0), cfg).norm() <= 1e-14);
}

TEST_CASE("field has zero mean and the right Laplacian") {
  const PointSample s = sample_uniform(20, 5, 0);
  const HeatTime t(0.01);
  const int m = 128;
  double gx = 0, gy = 0, fm = 0;
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < m; ++j) {
      const Vec2 g = grad_f(s, t, node(i, j, m), cfg);
      gx += g.x1;
      gy += g.x2;
      fm += f_value(s, t, node(i, j, m), cfg);
    }
  }
  CHECK(std::abs(gx / (m * m)) <= 1e-7);
  CHECK(std::abs(gy / (m * m)) <= 1e-7);
  CHECK(std::abs(fm / (m * m)) <= 1e-8);

  const double h = 1e-3;
  for (const TorusPoint y : {TorusPoint::wrap(0.31, 0.77), TorusPoint::wrap(0.9, 0.12)}) {
    auto f = [&](double a, double b) { return f_value(s, t, translate(y, {a, b}), cfg); };
    const double lap = (f(h, 0) + f(-h, 0) + f(0, h) + f(0, -h) - 4 * f(0, 0)) / (h * h);
    double rhs = -1.0;
    for (const auto& x : s.points) rhs += heat_kernel(t, nearest_image(x, y).vec(), cfg) / s.size();
    CHECK(std::abs(-lap - rhs) <= 1e-4);
  }
}

TEST_CASE("spectral synthesis matches the direct sum") {
  const PointSample s = sample_uniform(40, 8, 2);
  const double t = 0.005;
  const spectral::SpectralField field(s.points, t, cfg);
  const int m = 32;
  const auto grid = field.grid(m, true);
  double worst = 0.0, worst_h = 0.0;
  for (int i = 0; i < m; i += 3) {
    for (int j = 0; j < m; j += 5) {
      const std::size_t p = grid.index(i, j);
      const Vec2 g = grad_f(s, HeatTime(t), node(i, j, m), cfg);
      const Sym2 H = hess_f(s, HeatTime(t), node(i, j, m), cfg);
      worst = std::max({worst, std::abs(g.x1 - grid.g1[p]), std::abs(g.x2 - grid.g2[p]),
                        std::abs(f_value(s, HeatTime(t), node(i, j, m), cfg) - grid.value[p])});
      worst_h = std::max({worst_h, std::abs(H.xx - grid.hxx[p]), std::abs(H.xy - grid.hxy[p]),
                          std::abs(H.yy - grid.hyy[p])});
    }
  }
  CHECK(worst <= 1e-8);
  CHECK(worst_h <= 1e-6);
  CHECK(field.dirichlet() == doctest::Approx(dirichlet_energy(s, HeatTime(t), cfg)).epsilon(1e-9));
}

TEST_CASE("serial and parallel spectral paths agree bitwise") {
  const PointSample s = sample_uniform(300, 12, 1);
  const auto a = spectral::structure_factor(s.points, 20, spectral::Exec::Serial);
  const auto b = spectral::structure_factor(s.points, 20, spectral::Exec::Parallel);
  REQUIRE(a.rho.size() == b.rho.size());
  CHECK(a.rho == b.rho);
  const spectral::SpectralField fs(s.points, 0.003, cfg, spectral::Exec::Serial);
  const spectral::SpectralField fp(s.points, 0.003, cfg, spectral::Exec::Parallel);
  const auto gs = fs.grid(64, true, spectral::Exec::Serial);
  const auto gp = fp.grid(64, true, spectral::Exec::Parallel);
  CHECK(gs.value == gp.value);
  CHECK(gs.g1 == gp.g1);
  CHECK(gs.hxy == gp.hxy);
  auto term = [](std::size_t i) { return std::sin(0.001 * static_cast<double>(i)); };
  CHECK(parallel::blocked_sum(100000, term) == parallel::blocked_sum_serial(100000, term));
}

TEST_CASE("Dirichlet energy: quadrature, pairing identity, expectation") {
  const PointSample s = sample_uniform(25, 17, 3);
  const HeatTime t(0.01);
  const int m = 128;
  double quad = 0.0;
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < m; ++j) quad += grad_f(s, t, node(i, j, m), cfg).norm_sq();
  }
  quad /= m * m;
  const double e = dirichlet_energy(s, t, cfg);
  CHECK(std::abs(quad - e) <= 1e-6 * e);

  for (std::uint64_t r = 0; r < 5; ++r) {
    const PointSample x = sample_uniform(30, 23, r);
    const double tt = 0.004 * (r + 1);
    CHECK(std::abs(pairing_value(x, HeatTime(tt), cfg) - dirichlet_energy(x, HeatTime(tt / 2), cfg)) <= 1e-10);
    double avg = 0.0;
    for (const auto& p : x.points) avg += f_value(x, HeatTime(tt), p, cfg);
    CHECK(std::abs(pairing_value(x, HeatTime(tt), cfg) - avg / x.size()) <= 1e-10);
  }

  // E[n D] = q_{2t}(0): the off-diagonal pairs have zero mean.
  const std::size_t n = 32, R = 200;
  std::vector<double> v;
  for (std::size_t r = 0; r < R; ++r) v.push_back(n * dirichlet_energy(sample_uniform(n, 41, r), t, cfg));
  double mean = 0, var = 0;
  for (double x : v) mean += x / R;
  for (double x : v) var += (x - mean) * (x - mean) / (R - 1);
  const double ref = q_zero_at_origin(HeatTime(0.02), cfg);
  CHECK(std::abs(mean - ref) <= 3.0 * std::sqrt(var / R));
}

TEST_CASE("Hessian supremum") {
  const PointSample one = single_at_origin();
  const HeatTime t(0.01);
  const int m = 64;
  double best = 0.0;
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < m; ++j) {
      best = std::max(best, hess_q(t, nearest_image(node(i, j, m), one.points[0]).vec(), cfg).spectral_norm());
    }
  }
  CHECK(hessian_sup(one, t, m, cfg) == doctest::Approx(best).epsilon(1e-9));
  CHECK_THROWS_AS(hessian_sup(one, t, 8, cfg), InvalidArgument);

  const std::size_t n = 1024;
  const PointSample s = sample_uniform(n, 3, 0);
  const HeatTime tn(ScaleParams::of(n).t_n);
  const int m0 = static_cast<int>(std::ceil(4.0 / std::sqrt(tn.value())));
  const double coarse = hessian_sup(s, tn, 2 * m0, cfg), fine = hessian_sup(s, tn, 4 * m0, cfg);
  CHECK(std::abs(fine - coarse) < 0.02 * fine);

  const PointSample small = sample_uniform(16, 3, 0);
  double prev = 0.0;
  for (double tt : {0.004, 0.002, 0.001}) {
    const int mm = static_cast<int>(std::ceil(8.0 / std::sqrt(tt)));
    const double h = hessian_sup(small, HeatTime(tt), mm, cfg);
    if (prev > 0.0) {
      CHECK(h / prev < 2.5);
      CHECK(h / prev > 1.0 / 2.5);
    }
    prev = h;
  }
}

TEST_CASE("mollified field gradient against direct quadrature") {
  const PointSample s = sample_uniform(3, 77, 0);
  const double r = 0.05;
  const TorusPoint y = TorusPoint::wrap(0.4, 0.6);
  Vec2 ref;
  for (const auto& x : s.points) {
    ref += mollified_green_gradient_quadrature(r, nearest_image(y, x).vec(), cfg, 2) * (1.0 / 3.0);
  }
  CHECK((mollified_field_gradient(s, r, y, cfg) - ref).norm() <= 1e-6);
}

TEST_CASE("field errors") {
  const PointSample empty;
  CHECK_THROWS_AS(grad_f(empty, HeatTime(0.1), TorusPoint{}, cfg), InvalidArgument);
  CHECK_THROWS_AS(dirichlet_energy(single_at_origin(), HeatTime(0.0), cfg), DomainError);
}
