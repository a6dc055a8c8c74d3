#include "matchlab/field.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "matchlab/error.hpp"
#include "matchlab/parallel.hpp"
#include "matchlab/rng.hpp"
#include "matchlab/spectral.hpp"

namespace matchlab {

PointSample sample_uniform(std::size_t n, std::uint64_t seed, std::uint64_t replica_index) {
  if (n == 0) throw InvalidArgument("sample_uniform: n must be >= 1");
  if (n > 0xffffffffULL) throw InvalidArgument("sample_uniform: n exceeds the counter range");
  const Philox4x32 gen(seed);
  PointSample s;
  s.seed = seed;
  s.replica_index = replica_index;
  s.points.reserve(n);
  const auto lo = static_cast<std::uint32_t>(replica_index);
  const auto hi = static_cast<std::uint32_t>(replica_index >> 32);
  for (std::size_t i = 0; i < n; ++i) {
    const auto u = gen.uniform_pair({static_cast<std::uint32_t>(i), lo, hi, 0});
    s.points.push_back(TorusPoint::wrap(u[0], u[1]));
  }
  return s;
}

ScaleParams ScaleParams::of(std::size_t n) {
  if (n == 0) throw InvalidArgument("ScaleParams: n must be >= 1");
  const double nd = static_cast<double>(n);
  const double l = std::log(nd);
  return {n, 1.0 / std::sqrt(nd), l * l * l / nd};
}

namespace {

void require_points(const PointSample& s, const char* what) {
  if (s.points.empty()) throw InvalidArgument(std::string(what) + ": empty sample");
}

// y - X_i as the argument of q_t.
Vec2 offset(const TorusPoint& y, const TorusPoint& x) { return nearest_image(y, x).vec(); }

double pair_sum(const PointSample& s, double t, const KernelConfig& cfg) {
  const HeatTime ht(t);
  const std::size_t n = s.size();
  const double diagonal = static_cast<double>(n) * q_kernel(ht, Vec2{}, cfg);
  const double off = parallel::blocked_sum(n, [&](std::size_t i) {
    double row = 0.0;
    for (std::size_t j = i + 1; j < n; ++j) row += q_kernel(ht, offset(s.points[i], s.points[j]), cfg);
    return row;
  });
  const double nd = static_cast<double>(n);
  return (diagonal + 2.0 * off) / (nd * nd);
}

}  // namespace

double f_value(const PointSample& sample, HeatTime t, const TorusPoint& y, const KernelConfig& cfg) {
  require_points(sample, "f_value");
  double sum = 0.0;
  for (const auto& x : sample.points) sum += q_kernel(t, offset(y, x), cfg);
  return sum / static_cast<double>(sample.size());
}

Vec2 grad_f(const PointSample& sample, HeatTime t, const TorusPoint& y, const KernelConfig& cfg) {
  require_points(sample, "grad_f");
  Vec2 sum;
  for (const auto& x : sample.points) sum += grad_q(t, offset(y, x), cfg);
  return sum * (1.0 / static_cast<double>(sample.size()));
}

Sym2 hess_f(const PointSample& sample, HeatTime t, const TorusPoint& y, const KernelConfig& cfg) {
  require_points(sample, "hess_f");
  Sym2 sum;
  for (const auto& x : sample.points) sum += hess_q(t, offset(y, x), cfg);
  return sum * (1.0 / static_cast<double>(sample.size()));
}

double dirichlet_energy(const PointSample& sample, HeatTime t, const KernelConfig& cfg) {
  require_points(sample, "dirichlet_energy");
  if (!(t.value() > 0.0)) throw DomainError("dirichlet_energy: requires t > 0");
  return pair_sum(sample, 2.0 * t.value(), cfg);
}

double pairing_value(const PointSample& sample, HeatTime t, const KernelConfig& cfg) {
  require_points(sample, "pairing_value");
  if (!(t.value() > 0.0)) throw DomainError("pairing_value: requires t > 0");
  return pair_sum(sample, t.value(), cfg);
}

double hessian_sup(const PointSample& sample, HeatTime t, int grid_m, const KernelConfig& cfg) {
  require_points(sample, "hessian_sup");
  if (!(t.value() > 0.0)) throw DomainError("hessian_sup: requires t > 0");
  const int floor_m = static_cast<int>(std::ceil(4.0 / std::sqrt(t.value())));
  if (grid_m < floor_m) {
    throw InvalidArgument("hessian_sup: grid_m = " + std::to_string(grid_m) +
                          " is below the resolution floor " + std::to_string(floor_m));
  }
  const spectral::SpectralField field(sample.points, t.value(), cfg);
  const auto g = field.grid(grid_m, true);
  double best = 0.0;
  for (std::size_t i = 0; i < g.value.size(); ++i) {
    best = std::max(best, Sym2{g.hxx[i], g.hxy[i], g.hyy[i]}.spectral_norm());
  }
  return best;
}

Vec2 mollified_field_gradient(const PointSample& sample, double r, const TorusPoint& y,
                              const KernelConfig& cfg) {
  require_points(sample, "mollified_field_gradient");
  Vec2 sum;
  for (const auto& x : sample.points) sum += mollified_green_gradient(r, offset(y, x), cfg);
  return sum * (1.0 / static_cast<double>(sample.size()));
}

}  // namespace matchlab
