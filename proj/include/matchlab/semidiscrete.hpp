#pragma once

#include <cstdint>
#include <iosfwd>
#include <utility>
#include <vector>

#include "matchlab/field.hpp"
#include "matchlab/kernels.hpp"
#include "matchlab/torus.hpp"

namespace matchlab {

/// Dual potentials, one per site, normalized to mean zero.
struct DualWeights {
  std::vector<double> psi;
};

/// Optimal transport from the uniform pixel measure (m^2 pixels of mass
/// 1/m^2 at their centres) to the empirical measure of the sites.
struct SemidiscreteSolution {
  DualWeights weights;
  int grid_m = 0;
  std::vector<TorusPoint> sites;
  /// Site index of every pixel, row-major in (i, j), pixel centre
  /// ((i + 1/2)/m, (j + 1/2)/m).
  std::vector<std::int32_t> assignment;
  std::vector<double> cell_masses;
  /// sum_p (1/m^2) dist_sq(centre_p, X_assignment[p])
  double cost = 0.0;
  /// max_i |cell_mass_i - 1/n|
  double mass_residual = 0.0;
  /// Dual objective after every accepted update, and the matching residuals.
  std::vector<double> dual_trajectory;
  std::vector<double> residual_trajectory;
  int iterations = 0;

  std::size_t size() const { return sites.size(); }
};

/// Maximizes the dual
///   Phi(psi) = (1/n) sum_i psi_i + (1/m^2) sum_p min_i (d(p, X_i)^2 - psi_i)
/// until every cell mass is within mass_tol / n of 1/n. Pixels go to the
/// argmin site, ties to the lowest index.
///
/// Throws InvalidArgument for n > m^2, grid_m < 16 or mass_tol outside
/// [1e-10, 1e-2] or when no whole-pixel partition meets the tolerance, and
/// ConvergenceError (carrying the residual history) when
/// max_iters updates do not reach the tolerance.
SemidiscreteSolution solve(const PointSample& sample, int grid_m, double mass_tol = 1e-2,
                           int max_iters = 500);

/// Smallest power of two >= 16 sqrt(n), capped at 1024.
int default_grid(std::size_t n);

struct MapValue {
  std::size_t site = 0;
  /// Nearest-image representative of X_site - y.
  Displacement displacement;
};

/// T(y): the Laguerre cell containing y and the displacement to its site.
MapValue map_apply(const SemidiscreteSolution& sol, const TorusPoint& y);

/// Pixel-quadrature integrals of a converged solution against the field
/// f = f_{n,t} of the same sample.
struct TransportIntegrals {
  /// int |T(y) - y|^2 (the quadrature cost)
  double disp_sq_mean = 0.0;
  /// int |T(y) - y - grad f(T(y))|^2
  double map_poisson_err = 0.0;
  /// int |T(y) - y - grad f(y)|^2
  double nmap_err = 0.0;
  /// int (T(y) - y - grad f(y)) . grad f(y)
  double quasi_orth = 0.0;
  /// int |grad f(y)|^2 over the same pixels
  double dirichlet_quadrature = 0.0;
  /// int (f(T(y)) - f(y))
  double ftc_lhs = 0.0;
};

TransportIntegrals transport_integrals(const SemidiscreteSolution& sol, HeatTime t,
                                       const KernelConfig& cfg);

/// Several times at once; the grid field is synthesized per time, the
/// assignment is shared.
std::vector<TransportIntegrals> transport_integrals(const SemidiscreteSolution& sol,
                                                    const std::vector<double>& times,
                                                    const KernelConfig& cfg);

/// Exact optimum of the same pixel problem as a min-cost flow (n <= 16,
/// grid_m <= 32), splitting pixel mass when n does not divide m^2. Returns the
/// cost and, per pixel, the site receiving its largest share. Throws
/// InvalidArgument outside the size limits and Error if the optimality
/// certificate fails.
std::pair<double, std::vector<std::int32_t>> exact_oracle(const PointSample& sample, int grid_m);

/// CSV dump: a '#' header line with n, m, seed and replica, then
/// "pixel_index,site_index" rows, then "site,psi" rows.
void write_debug_dump(std::ostream& os, const SemidiscreteSolution& sol, const PointSample& sample);

}  // namespace matchlab
