#pragma once

#include <complex>
#include <span>
#include <vector>

#include "matchlab/kernels.hpp"
#include "matchlab/torus.hpp"

namespace matchlab::spectral {

using Complex = std::complex<double>;

enum class Exec { Serial, Parallel };

/// rho_k = (1/n) sum_i exp(-2 pi i k.X_i) for |k|_inf <= K, row-major in
/// (k1 + K, k2 + K).
struct StructureFactor {
  int K = 0;
  std::vector<Complex> rho;

  int side() const { return 2 * K + 1; }
  const Complex& at(int k1, int k2) const {
    return rho[static_cast<std::size_t>(k1 + K) * side() + (k2 + K)];
  }
};

StructureFactor structure_factor(std::span<const TorusPoint> points, int K,
                                 Exec exec = Exec::Parallel);

/// Smallest K whose neglected modes of the heat factor at time t stay below
/// `tolerance`. AccuracyError if K would exceed cfg.max_modes.
int mode_radius(double t, double tolerance, const KernelConfig& cfg);

struct PointValues {
  double value = 0.0;
  Vec2 grad;
  Sym2 hess;
};

/// Field values on the pixel centres ((i + 1/2)/m, (j + 1/2)/m), row-major
/// in (i, j). Hessian arrays stay empty unless requested.
struct GridValues {
  int m = 0;
  std::vector<double> value, g1, g2, hxx, hxy, hyy;

  std::size_t index(int i, int j) const { return static_cast<std::size_t>(i) * m + j; }
};

/// The field f(y) = (1/n) sum_i q_t(y - X_i) as a truncated Fourier series.
class SpectralField {
 public:
  SpectralField(std::span<const TorusPoint> points, double t, const KernelConfig& cfg,
                Exec exec = Exec::Parallel);

  double time() const { return t_; }
  int radius() const { return sf_.K; }
  const StructureFactor& structure() const { return sf_; }

  PointValues at(Vec2 y, bool with_hessian = false) const;
  GridValues grid(int m, bool with_hessian = false, Exec exec = Exec::Parallel) const;

  /// int |grad f|^2 = sum_{k != 0} |rho_k|^2 exp(-8 pi^2 |k|^2 t) / (4 pi^2 |k|^2).
  double dirichlet() const;

 private:
  double t_;
  StructureFactor sf_;
  std::vector<Complex> coef_;  // a_k(t) rho_k, same layout as rho
};

}  // namespace matchlab::spectral
