#include <algorithm>
#include <cmath>
#include <sstream>
#include <string>

#include "doctest.h"
#include "matchlab/error.hpp"
#include "matchlab/field.hpp"
#include "matchlab/rng.hpp"
#include "matchlab/semidiscrete.hpp"

using namespace matchlab;

namespace {

const KernelConfig cfg{};

PointSample points(std::initializer_list<Vec2> xs) {
  PointSample s;
  for (const Vec2& x : xs) s.points.push_back(TorusPoint::wrap(x));
  return s;
}

TorusPoint centre(std::size_t p, int m) {
  const auto i = static_cast<int>(p / m), j = static_cast<int>(p % m);
  return TorusPoint::wrap((i + 0.5) / m, (j + 0.5) / m);
}

void check_invariants(const SemidiscreteSolution& sol, double mass_tol) {
  const int m = sol.grid_m;
  const auto n = static_cast<double>(sol.size());
  REQUIRE(sol.assignment.size() == static_cast<std::size_t>(m) * m);
  double total = 0.0, cost = 0.0;
  std::vector<double> mass(sol.size(), 0.0);
  for (std::size_t p = 0; p < sol.assignment.size(); ++p) {
    const auto a = sol.assignment[p];
    REQUIRE(a >= 0);
    REQUIRE(static_cast<std::size_t>(a) < sol.size());
    mass[a] += 1.0 / (static_cast<double>(m) * m);
    cost += dist_sq(centre(p, m), sol.sites[a]) / (static_cast<double>(m) * m);
  }
  for (std::size_t i = 0; i < sol.size(); ++i) {
    total += sol.cell_masses[i];
    CHECK(sol.cell_masses[i] == doctest::Approx(mass[i]).epsilon(1e-12));
  }
  CHECK(std::abs(total - 1.0) <= 1e-12);
  CHECK(sol.cost == doctest::Approx(cost).epsilon(1e-12));
  CHECK(sol.mass_residual <= mass_tol / n * (1.0 + 1e-9));
  for (std::size_t k = 1; k < sol.dual_trajectory.size(); ++k) {
    CHECK(sol.dual_trajectory[k] >= sol.dual_trajectory[k - 1] - 1e-15);
  }
}

}  // namespace

TEST_CASE("single site: cost of the centred unit square") {
  const PointSample s = points({{0.3, 0.7}});
  const SemidiscreteSolution sol = solve(s, 256);
  check_invariants(sol, 1e-2);
  CHECK(sol.weights.psi == std::vector<double>{0.0});
  CHECK(std::abs(sol.cost - 1.0 / 6.0) <= 1e-4);
  for (const TorusPoint y : {TorusPoint::wrap(0.1, 0.2), TorusPoint::wrap(0.95, 0.5)}) {
    const MapValue v = map_apply(sol, y);
    CHECK(v.site == 0);
    CHECK(v.displacement == nearest_image(s.points[0], y));
  }
}

TEST_CASE("four-point lattice: symmetric cells") {
  const PointSample s = points({{0, 0}, {0, 0.5}, {0.5, 0}, {0.5, 0.5}});
  const SemidiscreteSolution sol = solve(s, 256, 1e-8);
  check_invariants(sol, 1e-8);
  for (double psi : sol.weights.psi) CHECK(std::abs(psi) <= 1e-12);
  CHECK(std::abs(sol.cost - 1.0 / 24.0) <= 1e-4);
  for (double mass : sol.cell_masses) CHECK(mass == doctest::Approx(0.25).epsilon(1e-14));
}

TEST_CASE("solver agrees with the exact pixel transport") {
  int done = 0;
  for (std::size_t n : {1, 2, 4, 8}) {
    for (std::uint64_t r = 0; r < 5; ++r) {
      const PointSample s = sample_uniform(n, 1000 + n, r);
      const SemidiscreteSolution sol = solve(s, 16, 1e-8);
      check_invariants(sol, 1e-8);
      const auto [exact, assignment] = exact_oracle(s, 16);
      CHECK(std::abs(sol.cost - exact) <= 1e-8);
      ++done;
    }
  }
  CHECK(done == 20);
}

TEST_CASE("larger solves keep their invariants") {
  for (std::size_t n : {64, 100, 300}) {
    const PointSample s = sample_uniform(n, 7, 0);
    const int m = default_grid(n);
    const SemidiscreteSolution sol = solve(s, m);
    check_invariants(sol, 1e-2);
    // The solver's assignment is the argmin under its own weights.
    for (std::size_t p = 0; p < sol.assignment.size(); p += 7) {
      CHECK(map_apply(sol, centre(p, m)).site == static_cast<std::size_t>(sol.assignment[p]));
    }
    // A site lies in its own cell whenever that cell is strictly dominant.
    for (std::size_t j = 0; j < n; ++j) {
      const MapValue v = map_apply(sol, s.points[j]);
      if (v.site == j) CHECK(v.displacement == Displacement{});
    }
  }
}

TEST_CASE("a stalled coordinate polish hands over to the sparse exact phase") {
  // This sample stalls the per-site polish on a kink of the dual.
  const PointSample s = sample_uniform(1024, derive_seed(20240601, 1024), 1);
  const SemidiscreteSolution sol = solve(s, 512);
  check_invariants(sol, 1e-2);
  for (std::size_t p = 0; p < sol.assignment.size(); p += 97) {
    CHECK(map_apply(sol, centre(p, 512)).site == static_cast<std::size_t>(sol.assignment[p]));
  }
}

TEST_CASE("solver argument checks") {
  const PointSample s = sample_uniform(5, 1, 0);
  CHECK_THROWS_AS(solve(s, 8), InvalidArgument);
  CHECK_THROWS_AS(solve(s, 16, 0.5), InvalidArgument);
  CHECK_THROWS_AS(solve(s, 16, 1e-12), InvalidArgument);
  // 256 pixels cannot be split into five near-equal whole-pixel cells.
  CHECK_THROWS_AS(solve(s, 16, 1e-8), InvalidArgument);
  CHECK_THROWS_AS(solve(sample_uniform(300, 1, 0), 16), InvalidArgument);
  CHECK_THROWS_AS(solve(PointSample{}, 16), InvalidArgument);
  CHECK_THROWS_AS(default_grid(0), InvalidArgument);
  CHECK(default_grid(1) == 16);
  CHECK(default_grid(4096) == 1024);
}

TEST_CASE("iteration budget exhaustion reports the residuals") {
  const PointSample s = sample_uniform(256, 3, 0);
  try {
    solve(s, 256, 1e-8, 1);
    FAIL("expected ConvergenceError");
  } catch (const ConvergenceError& e) {
    CHECK_FALSE(e.residuals().empty());
  }
}

TEST_CASE("exact oracle") {
  const PointSample one = points({{0.2, 0.4}});
  double quad = 0.0;
  for (std::size_t p = 0; p < 256; ++p) quad += dist_sq(centre(p, 16), one.points[0]) / 256.0;
  const auto [c1, a1] = exact_oracle(one, 16);
  CHECK(c1 == doctest::Approx(quad).epsilon(1e-12));
  CHECK(std::all_of(a1.begin(), a1.end(), [](std::int32_t a) { return a == 0; }));

  const auto [c2, a2] = exact_oracle(points({{0, 0}, {0.5, 0.5}}), 16);
  const auto [c3, a3] = exact_oracle(points({{0.5, 0.5}, {0, 0}}), 16);
  CHECK(c2 == doctest::Approx(c3).epsilon(1e-12));

  CHECK_THROWS_AS(exact_oracle(sample_uniform(17, 1, 0), 16), InvalidArgument);
  CHECK_THROWS_AS(exact_oracle(one, 33), InvalidArgument);
}

TEST_CASE("transport integrals") {
  for (std::uint64_t r = 0; r < 3; ++r) {
    const std::size_t n = 64;
    const PointSample s = sample_uniform(n, 55, r);
    const SemidiscreteSolution sol = solve(s, 128, 1e-8);
    const double t = 1.0 / n;
    const TransportIntegrals ti = transport_integrals(sol, HeatTime(t), cfg);
    CHECK(ti.disp_sq_mean == doctest::Approx(sol.cost).epsilon(1e-12));
    CHECK(std::abs(ti.ftc_lhs - pairing_value(s, HeatTime(t), cfg)) <= 1e-6);
    const double sum = ti.nmap_err + ti.dirichlet_quadrature + 2.0 * ti.quasi_orth;
    CHECK(std::abs(ti.disp_sq_mean - sum) <= 1e-8);
    CHECK(ti.dirichlet_quadrature == doctest::Approx(dirichlet_energy(s, HeatTime(t), cfg)).epsilon(1e-6));

    const TransportIntegrals late = transport_integrals(sol, HeatTime(5.0), cfg);
    CHECK(std::abs(late.nmap_err - late.disp_sq_mean) <= 1e-6);
    CHECK(std::abs(late.map_poisson_err - late.disp_sq_mean) <= 1e-6);

    const auto many = transport_integrals(sol, std::vector<double>{t, 5.0}, cfg);
    REQUIRE(many.size() == 2);
    CHECK(many[0].quasi_orth == ti.quasi_orth);
  }
  SemidiscreteSolution empty;
  CHECK_THROWS_AS(transport_integrals(empty, HeatTime(0.1), cfg), InvalidArgument);
}

TEST_CASE("debug dump lists pixels and weights") {
  const PointSample s = sample_uniform(4, 9, 2);
  const SemidiscreteSolution sol = solve(s, 16);
  std::ostringstream os;
  write_debug_dump(os, sol, s);
  std::istringstream in(os.str());
  std::string line;
  std::getline(in, line);
  CHECK(line == "# n=4 m=16 seed=9 replica=2");
  std::getline(in, line);
  CHECK(line == "pixel_index,site_index");
  for (std::size_t p = 0; p < 256; ++p) {
    std::getline(in, line);
    CHECK(line == std::to_string(p) + "," + std::to_string(sol.assignment[p]));
  }
  std::getline(in, line);
  CHECK(line == "site,psi");
  for (std::size_t i = 0; i < 4; ++i) {
    std::getline(in, line);
    CHECK(std::stod(line.substr(line.find(',') + 1)) == sol.weights.psi[i]);
  }
}
