#pragma once

#include <span>
#include <vector>

#include "matchlab/special.hpp"
#include "matchlab/torus.hpp"

namespace matchlab {

/// Truncation and splitting parameters for the periodic kernel series.
///
/// The heat kernel uses the convention p_t(x) = sum_k exp(-4 pi^2 |k|^2 t)
/// exp(2 pi i k.x), i.e. the fundamental solution of d/dt u = Laplace u on the
/// unit torus, so that -Laplace q_t = p_t - 1.
struct KernelConfig {
  /// Absolute truncation error allowed per evaluation, in (0, 1e-6].
  double target_accuracy = 1e-10;
  /// Below this time Gaussian image sums are used, above it Fourier sums.
  double crossover_time = 1.0 / (2.0 * special::kPi);
  /// Ewald splitting time for the small-t and t = 0 integrated kernels.
  double ewald_sigma = 1.0 / (4.0 * special::kPi * special::kPi);
  /// Cap on any truncation radius (Fourier modes or lattice images).
  int max_modes = 4096;

  /// Throws InvalidArgument if any field is out of range.
  void validate() const;
};

/// Heat time t >= 0. Most kernels require t > 0 and raise DomainError
/// otherwise.
class HeatTime {
 public:
  explicit HeatTime(double t);
  double value() const { return t_; }

 private:
  double t_;
};

/// Torus heat kernel p_t(x). Image sum for t < crossover, Fourier otherwise.
double heat_kernel(HeatTime t, Vec2 x, const KernelConfig& cfg);
/// Both representations, exposed for cross-checks. Either can be used at any t.
double heat_kernel_fourier(HeatTime t, Vec2 x, const KernelConfig& cfg);
double heat_kernel_images(HeatTime t, Vec2 x, const KernelConfig& cfg);

/// Value, gradient and Hessian of q_t = int_t^inf (p_s - 1) ds.
struct QParts {
  double value = 0.0;
  Vec2 grad;
  Sym2 hess;
};

/// Evaluates q_t and its derivatives. Fourier series for t >= crossover,
/// Ewald split (Fourier at t + sigma, exponential-integral image sum on
/// [t, t + sigma]) below it.
QParts q_parts(HeatTime t, Vec2 x, const KernelConfig& cfg);

double q_kernel(HeatTime t, Vec2 x, const KernelConfig& cfg);
Vec2 grad_q(HeatTime t, Vec2 x, const KernelConfig& cfg);
Sym2 hess_q(HeatTime t, Vec2 x, const KernelConfig& cfg);
double q_zero_at_origin(HeatTime t, const KernelConfig& cfg);

/// Plain Fourier series of q_t at time t, no splitting. Used as an
/// independent reference; raises AccuracyError when t is too small for
/// max_modes.
double q_kernel_fourier(HeatTime t, Vec2 x, const KernelConfig& cfg, int radius_scale = 1);

/// Gradient of the torus Green function q_0. Singular at the origin
/// (DomainError), behaves like -x / (2 pi |x|^2) there.
Vec2 green_gradient(Vec2 x, const KernelConfig& cfg);

/// Gradient of the regular part q_0(x) + log|x| / (2 pi) on the fundamental
/// cell; finite everywhere and zero at the origin.
Vec2 green_gradient_regular(Vec2 x, const KernelConfig& cfg);

// -- mollifier --------------------------------------------------------------

/// Normalized bump eta(x) = c exp(-1/(1-|x|^2)) on the unit ball.
double mollifier(Vec2 x);
double mollifier_normalization();
/// Mass of eta inside the ball of radius s (1 for s >= 1).
double mollifier_mass(double s);

/// grad(eta_r * q_0)(z) for 0 < r <= 1/4. Evaluated in closed form: circle
/// averages reduce the logarithmic part to the enclosed mass of eta_r and
/// leave the gradient of the regular part unchanged.
Vec2 mollified_green_gradient(double r, Vec2 z, const KernelConfig& cfg);

/// The same convolution by polar quadrature centred at the singularity.
/// `resolution` scales both angular and radial node counts.
Vec2 mollified_green_gradient_quadrature(double r, Vec2 z, const KernelConfig& cfg,
                                         int resolution = 1);

// -- deterministic inequality report ---------------------------------------

struct KernelInequalityRow {
  double t = 0.0;
  /// t * int |grad q_t|^4
  double fourth_moment_scaled = 0.0;
  /// sqrt(t) * sup |grad q_t|
  double sup_scaled = 0.0;
  /// int |grad q_t - grad(eta_sqrt(t) * q_0)|^2
  double change_kernel_energy = 0.0;
  int grid_m = 0;
};

/// Grid quadrature of the three functionals on a grid with pitch at most
/// sqrt(t)/8. Requires times in [1e-5, 1/16] (the mollifier radius sqrt(t)
/// must stay below 1/4); AccuracyError if the grid would exceed max_grid.
std::vector<KernelInequalityRow> kernel_inequality_report(std::span<const double> times,
                                                          const KernelConfig& cfg,
                                                          int max_grid = 4096);

}  // namespace matchlab
