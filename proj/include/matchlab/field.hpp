#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "matchlab/kernels.hpp"
#include "matchlab/torus.hpp"

namespace matchlab {

/// n i.i.d. uniform points, reproducible from (seed, replica_index).
struct PointSample {
  std::vector<TorusPoint> points;
  std::uint64_t seed = 0;
  std::uint64_t replica_index = 0;

  std::size_t size() const { return points.size(); }
};

/// Point i takes both coordinates from Philox block (i, replica lo, replica hi, 0).
PointSample sample_uniform(std::size_t n, std::uint64_t seed, std::uint64_t replica_index);

/// Length and time scales attached to a sample size: r_n = n^{-1/2} and
/// t_n = (ln n)^3 / n.
struct ScaleParams {
  std::size_t n = 0;
  double r_n = 0.0;
  double t_n = 0.0;

  static ScaleParams of(std::size_t n);
};

// The field f(y) = (1/n) sum_i q_t(y - X_i) solves -Laplace f = p_t * (mu_n - 1).
// All evaluations below are direct sums over the sample.

double f_value(const PointSample& sample, HeatTime t, const TorusPoint& y, const KernelConfig& cfg);
Vec2 grad_f(const PointSample& sample, HeatTime t, const TorusPoint& y, const KernelConfig& cfg);
Sym2 hess_f(const PointSample& sample, HeatTime t, const TorusPoint& y, const KernelConfig& cfg);

/// int |grad f|^2 = (1/n^2) sum_{i,j} q_{2t}(X_i - X_j).
double dirichlet_energy(const PointSample& sample, HeatTime t, const KernelConfig& cfg);

/// int f d(mu_n - 1) = (1/n^2) sum_{i,j} q_t(X_i - X_j).
double pairing_value(const PointSample& sample, HeatTime t, const KernelConfig& cfg);

/// Largest spectral norm of the Hessian over the grid_m^2 pixel centres.
/// A lower bound for the true supremum; grid_m must be at least ceil(4/sqrt(t)).
double hessian_sup(const PointSample& sample, HeatTime t, int grid_m, const KernelConfig& cfg);

/// grad phi(y) for -Laplace phi = eta_r * (mu_n - 1), 0 < r <= 1/4.
Vec2 mollified_field_gradient(const PointSample& sample, double r, const TorusPoint& y,
                              const KernelConfig& cfg);

}  // namespace matchlab
