#include "matchlab/spectral.hpp"

#include <cmath>
#include <string>

#include "matchlab/error.hpp"
#include "matchlab/special.hpp"

namespace matchlab::spectral {

using special::kPi;

namespace {

constexpr double kTwoPi = 2.0 * kPi;
constexpr double kFourPiSq = 4.0 * kPi * kPi;

// Plain complex arithmetic; std::complex multiplication carries NaN
// recovery branches that dominate these inner loops.
struct Cx {
  double re = 0.0, im = 0.0;
};
inline Cx mul(Cx a, Cx b) { return {a.re * b.re - a.im * b.im, a.re * b.im + a.im * b.re}; }
inline void fma_into(Cx& acc, Cx a, Cx b) {
  acc.re += a.re * b.re - a.im * b.im;
  acc.im += a.re * b.im + a.im * b.re;
}
inline Cx cx(const Complex& z) { return {z.real(), z.imag()}; }

// exp(sign 2 pi i k x) for k = 0..K.
void phases(double x, int K, double sign, Cx* out) {
  const Cx w{std::cos(kTwoPi * x), sign * std::sin(kTwoPi * x)};
  out[0] = {1.0, 0.0};
  for (int k = 1; k <= K; ++k) {
    // Re-anchor periodically so the recurrence error stays at rounding level.
    if (k % 32 == 0) {
      out[k] = {std::cos(kTwoPi * k * x), sign * std::sin(kTwoPi * k * x)};
    } else {
      out[k] = mul(out[k - 1], w);
    }
  }
}

// exp(sign 2 pi i k x) for k = -K..K, stored at k + K.
void phases_full(double x, int K, double sign, Cx* out) {
  phases(x, K, sign, out + K);
  for (int k = 1; k <= K; ++k) out[K - k] = {out[K + k].re, -out[K + k].im};
}

template <class F>
void for_each_index(int count, Exec exec, F&& f) {
  if (exec == Exec::Parallel) {
#pragma omp parallel for schedule(static)
    for (int i = 0; i < count; ++i) f(i);
  } else {
    for (int i = 0; i < count; ++i) f(i);
  }
}

}  // namespace

StructureFactor structure_factor(std::span<const TorusPoint> points, int K, Exec exec) {
  if (K < 0) throw InvalidArgument("structure_factor: K must be >= 0");
  if (points.empty()) throw InvalidArgument("structure_factor: empty point set");
  const int n = static_cast<int>(points.size());
  const int S = 2 * K + 1;
  std::vector<Cx> u(static_cast<std::size_t>(n) * (K + 1));
  std::vector<Cx> v(static_cast<std::size_t>(n) * S);
  for_each_index(n, exec, [&](int i) {
    phases(points[i].x1(), K, -1.0, &u[static_cast<std::size_t>(i) * (K + 1)]);
    phases_full(points[i].x2(), K, -1.0, &v[static_cast<std::size_t>(i) * S]);
  });

  StructureFactor sf;
  sf.K = K;
  sf.rho.assign(static_cast<std::size_t>(S) * S, Complex{});
  const double inv_n = 1.0 / n;
  for_each_index(K + 1, exec, [&](int k1) {
    std::vector<Cx> acc(S);
    for (int i = 0; i < n; ++i) {
      const Cx a = u[static_cast<std::size_t>(i) * (K + 1) + k1];
      const Cx* row = &v[static_cast<std::size_t>(i) * S];
      for (int c = 0; c < S; ++c) fma_into(acc[c], a, row[c]);
    }
    for (int c = 0; c < S; ++c) {
      sf.rho[static_cast<std::size_t>(k1 + K) * S + c] = {acc[c].re * inv_n, acc[c].im * inv_n};
    }
  });
  // rho_{-k} = conj(rho_k)
  for (int k1 = 1; k1 <= K; ++k1) {
    for (int c = 0; c < S; ++c) {
      sf.rho[static_cast<std::size_t>(K - k1) * S + (S - 1 - c)] =
          std::conj(sf.rho[static_cast<std::size_t>(K + k1) * S + c]);
    }
  }
  return sf;
}

int mode_radius(double t, double tolerance, const KernelConfig& cfg) {
  if (!(t > 0.0)) throw DomainError("mode_radius: requires t > 0");
  if (!(tolerance > 0.0 && tolerance < 1.0)) {
    throw InvalidArgument("mode_radius: tolerance must lie in (0, 1)");
  }
  const double k = std::sqrt(std::log(1.0 / tolerance) / (kFourPiSq * t));
  const double K = std::ceil(k) + 1.0;
  if (K > cfg.max_modes) {
    throw AccuracyError("mode_radius: t = " + std::to_string(t) + " needs " +
                        std::to_string(static_cast<long long>(K)) + " modes per axis, limit is " +
                        std::to_string(cfg.max_modes));
  }
  return static_cast<int>(K);
}

SpectralField::SpectralField(std::span<const TorusPoint> points, double t,
                             const KernelConfig& cfg, Exec exec)
    : t_(t) {
  cfg.validate();
  const int K = mode_radius(t, cfg.target_accuracy * 1e-3, cfg);
  sf_ = structure_factor(points, K, exec);
  const int S = sf_.side();
  coef_.assign(sf_.rho.size(), Complex{});
  for (int k1 = -K; k1 <= K; ++k1) {
    for (int k2 = -K; k2 <= K; ++k2) {
      if (k1 == 0 && k2 == 0) continue;
      const double k_sq = static_cast<double>(k1) * k1 + static_cast<double>(k2) * k2;
      const double a = std::exp(-kFourPiSq * k_sq * t) / (kFourPiSq * k_sq);
      const std::size_t idx = static_cast<std::size_t>(k1 + K) * S + (k2 + K);
      coef_[idx] = a * sf_.rho[idx];
    }
  }
}

double SpectralField::dirichlet() const {
  const int K = sf_.K;
  double total = 0.0;
  for (int k1 = -K; k1 <= K; ++k1) {
    double row = 0.0;
    for (int k2 = -K; k2 <= K; ++k2) {
      if (k1 == 0 && k2 == 0) continue;
      const double k_sq = static_cast<double>(k1) * k1 + static_cast<double>(k2) * k2;
      row += std::norm(sf_.at(k1, k2)) * std::exp(-2.0 * kFourPiSq * k_sq * t_) / (kFourPiSq * k_sq);
    }
    total += row;
  }
  return total;
}

PointValues SpectralField::at(Vec2 y, bool with_hessian) const {
  const int K = sf_.K;
  const int S = sf_.side();
  std::vector<Cx> e1(K + 1), e2(S);
  phases(y.x1, K, 1.0, e1.data());
  phases_full(y.x2, K, 1.0, e2.data());
  PointValues out;
  for (int k1 = 0; k1 <= K; ++k1) {
    Cx h0, h1, h2;
    for (int c = 0; c < S; ++c) {
      const Cx term = mul(cx(coef_[static_cast<std::size_t>(k1 + K) * S + c]), e2[c]);
      const double w2 = kTwoPi * (c - K);
      h0.re += term.re;
      h0.im += term.im;
      // multiply by 2 pi i k2 and (2 pi i k2)^2
      h1.re -= w2 * term.im;
      h1.im += w2 * term.re;
      h2.re -= w2 * w2 * term.re;
      h2.im -= w2 * w2 * term.im;
    }
    const double weight = k1 == 0 ? 1.0 : 2.0;
    const double w1 = kTwoPi * k1;
    const Cx z0 = mul(e1[k1], h0), z1 = mul(e1[k1], h1);
    out.value += weight * z0.re;
    out.grad.x1 += weight * (-w1 * z0.im);
    out.grad.x2 += weight * z1.re;
    if (with_hessian) {
      const Cx z2 = mul(e1[k1], h2);
      out.hess.xx += weight * (-w1 * w1 * z0.re);
      out.hess.xy += weight * (-w1 * z1.im);
      out.hess.yy += weight * z2.re;
    }
  }
  return out;
}

GridValues SpectralField::grid(int m, bool with_hessian, Exec exec) const {
  if (m < 1) throw InvalidArgument("SpectralField::grid: m must be >= 1");
  const int K = sf_.K;
  const int S = sf_.side();
  const std::size_t cells = static_cast<std::size_t>(m) * m;
  std::vector<Cx> e1(static_cast<std::size_t>(m) * (K + 1)), e2(static_cast<std::size_t>(m) * S);
  for_each_index(m, exec, [&](int j) {
    const double y = (j + 0.5) / m;
    phases(y, K, 1.0, &e1[static_cast<std::size_t>(j) * (K + 1)]);
    phases_full(y, K, 1.0, &e2[static_cast<std::size_t>(j) * S]);
  });

  // Stage one: contract the k2 index against the column phases.
  const int orders = with_hessian ? 3 : 2;
  std::vector<Cx> stage(static_cast<std::size_t>(orders) * (K + 1) * m);
  auto stage_at = [&](int p, int k1, int j) -> Cx& {
    return stage[(static_cast<std::size_t>(p) * (K + 1) + k1) * m + j];
  };
  for_each_index(K + 1, exec, [&](int k1) {
    const Complex* row = &coef_[static_cast<std::size_t>(k1 + K) * S];
    for (int j = 0; j < m; ++j) {
      const Cx* ph = &e2[static_cast<std::size_t>(j) * S];
      Cx h0, h1, h2;
      for (int c = 0; c < S; ++c) {
        const Cx term = mul(cx(row[c]), ph[c]);
        const double w2 = kTwoPi * (c - K);
        h0.re += term.re;
        h0.im += term.im;
        h1.re -= w2 * term.im;
        h1.im += w2 * term.re;
        h2.re -= w2 * w2 * term.re;
        h2.im -= w2 * w2 * term.im;
      }
      stage_at(0, k1, j) = h0;
      stage_at(1, k1, j) = h1;
      if (with_hessian) stage_at(2, k1, j) = h2;
    }
  });

  GridValues g;
  g.m = m;
  g.value.assign(cells, 0.0);
  g.g1.assign(cells, 0.0);
  g.g2.assign(cells, 0.0);
  if (with_hessian) {
    g.hxx.assign(cells, 0.0);
    g.hxy.assign(cells, 0.0);
    g.hyy.assign(cells, 0.0);
  }
  // Stage two: contract k1 against the row phases.
  for_each_index(m, exec, [&](int i) {
    const Cx* ph = &e1[static_cast<std::size_t>(i) * (K + 1)];
    for (int k1 = 0; k1 <= K; ++k1) {
      const double weight = k1 == 0 ? 1.0 : 2.0;
      const double w1 = kTwoPi * k1;
      for (int j = 0; j < m; ++j) {
        const std::size_t idx = g.index(i, j);
        const Cx z0 = mul(ph[k1], stage_at(0, k1, j));
        const Cx z1 = mul(ph[k1], stage_at(1, k1, j));
        g.value[idx] += weight * z0.re;
        g.g1[idx] += weight * (-w1 * z0.im);
        g.g2[idx] += weight * z1.re;
        if (with_hessian) {
          const Cx z2 = mul(ph[k1], stage_at(2, k1, j));
          g.hxx[idx] += weight * (-w1 * w1 * z0.re);
          g.hxy[idx] += weight * (-w1 * z1.im);
          g.hyy[idx] += weight * z2.re;
        }
      }
    }
  });
  return g;
}

}  // namespace matchlab::spectral
