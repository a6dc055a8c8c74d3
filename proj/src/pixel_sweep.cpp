#include "pixel_sweep.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "matchlab/error.hpp"

namespace matchlab::detail {

namespace {

inline double wrapped_sq(double a, double b) {
  double d = a - b;
  d -= std::floor(d + 0.5);
  return d * d;
}

constexpr double kInf = std::numeric_limits<double>::infinity();

}  // namespace

std::int64_t SweepResult::empty_cells() const {
  return std::count(counts.begin(), counts.end(), std::int64_t{0});
}

std::int64_t SweepResult::max_count_deviation(double target) const {
  double worst = 0.0;
  for (auto c : counts) worst = std::max(worst, std::abs(static_cast<double>(c) - target));
  return static_cast<std::int64_t>(std::ceil(worst));
}

PixelSweeper::PixelSweeper(std::span<const TorusPoint> sites, int m)
    : sites_(sites.begin(), sites.end()), m_(m) {
  if (sites_.empty()) throw InvalidArgument("PixelSweeper: no sites");
  if (m < 1) throw InvalidArgument("PixelSweeper: grid must be >= 1");
  // About two sites per bucket.
  B_ = std::max(1, static_cast<int>(std::sqrt(static_cast<double>(sites_.size()) / 2.0)));
  tile_ = std::clamp(static_cast<int>(m / (2.0 * std::sqrt(static_cast<double>(sites_.size())))), 1, m);
  const int cells = B_ * B_;
  std::vector<std::int32_t> count(cells + 1, 0);
  std::vector<int> home(sites_.size());
  for (std::size_t s = 0; s < sites_.size(); ++s) {
    const int bx = std::min(B_ - 1, static_cast<int>(sites_[s].x1() * B_));
    const int by = std::min(B_ - 1, static_cast<int>(sites_[s].x2() * B_));
    home[s] = bx * B_ + by;
    ++count[home[s] + 1];
  }
  for (int b = 0; b < cells; ++b) count[b + 1] += count[b];
  bucket_start_ = count;
  slots_.resize(sites_.size());
  std::vector<std::int32_t> fill(count.begin(), count.end() - 1);
  // Sites are visited in index order, so every bucket lists them ascending.
  for (std::size_t s = 0; s < sites_.size(); ++s) {
    slots_[fill[home[s]]++] = {sites_[s].x1(), sites_[s].x2(), static_cast<std::int32_t>(s)};
  }
}

Vec2 PixelSweeper::centre(std::size_t index) const {
  const auto i = static_cast<int>(index / m_);
  const auto j = static_cast<int>(index % m_);
  return {(i + 0.5) / m_, (j + 0.5) / m_};
}

double PixelSweeper::value(std::size_t pixel, std::size_t site, std::span<const double> psi) const {
  const Vec2 c = centre(pixel);
  return wrapped_sq(c.x1, sites_[site].x1()) + wrapped_sq(c.x2, sites_[site].x2()) - psi[site];
}

void PixelSweeper::sweep(std::span<const double> psi, SweepResult& out, bool runner_up,
                         bool parallel) const {
  if (psi.size() != sites_.size()) throw InvalidArgument("PixelSweeper: psi size mismatch");
  const std::size_t cells = static_cast<std::size_t>(m_) * m_;
  out.owner.resize(cells);
  out.best.resize(cells);
  if (runner_up) {
    out.runner_up.resize(cells);
    out.runner_owner.resize(cells);
  } else {
    out.runner_up.clear();
    out.runner_owner.clear();
  }
  const double psi_max = *std::max_element(psi.begin(), psi.end());
  const int tile_rows = (m_ + tile_ - 1) / tile_;
  if (parallel) {
#pragma omp parallel for schedule(dynamic)
    for (int ti = 0; ti < tile_rows; ++ti) sweep_tile_row(ti, psi, psi_max, out, runner_up);
  } else {
    for (int ti = 0; ti < tile_rows; ++ti) sweep_tile_row(ti, psi, psi_max, out, runner_up);
  }
  out.counts.assign(sites_.size(), 0);
  for (auto o : out.owner) ++out.counts[static_cast<std::size_t>(o)];
  double total = 0.0;
  for (int i = 0; i < m_; ++i) {
    double row = 0.0;
    const std::size_t base = static_cast<std::size_t>(i) * m_;
    for (int j = 0; j < m_; ++j) row += out.best[base + j];
    total += row;
  }
  out.best_sum = total;
}

void PixelSweeper::tile_candidates(int i0, int j0, std::span<const double> psi, double psi_max,
                                   bool runner_up, std::vector<Slot>& cand) const {
  const int i1 = std::min(m_, i0 + tile_), j1 = std::min(m_, j0 + tile_);
  // Extent of the pixel centres of the tile.
  const double lo1 = (i0 + 0.5) / m_, hi1 = (i1 - 0.5) / m_;
  const double lo2 = (j0 + 0.5) / m_, hi2 = (j1 - 0.5) / m_;
  const double c1 = 0.5 * (lo1 + hi1), c2 = 0.5 * (lo2 + hi2);
  const double h1 = 0.5 * (hi1 - lo1), h2 = 0.5 * (hi2 - lo2);

  struct Bounds {
    Slot slot;
    double lower, upper;
  };
  std::vector<Bounds> seen;
  double up1 = kInf, up2 = kInf;  // two smallest upper bounds
  auto consider = [&](const Slot& s) {
    double d1 = s.x1 - c1, d2 = s.x2 - c2;
    d1 = std::abs(d1 - std::floor(d1 + 0.5));
    d2 = std::abs(d2 - std::floor(d2 + 0.5));
    const double n1 = std::max(0.0, d1 - h1), n2 = std::max(0.0, d2 - h2);
    const double f1 = std::min(0.5, d1 + h1), f2 = std::min(0.5, d2 + h2);
    const double p = psi[static_cast<std::size_t>(s.index)];
    const Bounds b{s, n1 * n1 + n2 * n2 - p, f1 * f1 + f2 * f2 - p};
    if (b.upper < up1) {
      up2 = up1;
      up1 = b.upper;
    } else if (b.upper < up2) {
      up2 = b.upper;
    }
    seen.push_back(b);
  };
  auto scan_bucket = [&](int x, int y) {
    x = ((x % B_) + B_) % B_;
    y = ((y % B_) + B_) % B_;
    const int b = x * B_ + y;
    for (std::int32_t k = bucket_start_[b]; k < bucket_start_[b + 1]; ++k) consider(slots_[k]);
  };

  const int bx = std::min(B_ - 1, static_cast<int>(c1 * B_));
  const int by = std::min(B_ - 1, static_cast<int>(c2 * B_));
  const double inv_b = 1.0 / B_;
  for (int r = 0;; ++r) {
    if (2 * r + 1 >= B_) {
      seen.clear();
      up1 = up2 = kInf;
      for (const Slot& s : slots_) consider(s);
      break;
    }
    if (r == 0) {
      scan_bucket(bx, by);
    } else {
      for (int o = -r; o <= r; ++o) {
        scan_bucket(bx + o, by - r);
        scan_bucket(bx + o, by + r);
      }
      for (int o = -r + 1; o <= r - 1; ++o) {
        scan_bucket(bx - r, by + o);
        scan_bucket(bx + r, by + o);
      }
    }
    const double reach = std::min({lo1 - (bx - r) * inv_b, (bx + r + 1) * inv_b - hi1,
                                   lo2 - (by - r) * inv_b, (by + r + 1) * inv_b - hi2});
    const double needed = runner_up ? up2 : up1;
    if (reach > 0.0 && reach * reach - psi_max > needed) break;
  }
  const double cut = runner_up ? up2 : up1;
  cand.clear();
  for (const Bounds& b : seen) {
    if (b.lower <= cut) cand.push_back(b.slot);
  }
  std::sort(cand.begin(), cand.end(), [](const Slot& a, const Slot& b) { return a.index < b.index; });
}

void PixelSweeper::sweep_tile_row(int ti, std::span<const double> psi, double psi_max,
                                  SweepResult& out, bool runner_up) const {
  std::vector<Slot> cand;
  const int i0 = ti * tile_;
  const int i1 = std::min(m_, i0 + tile_);
  for (int j0 = 0; j0 < m_; j0 += tile_) {
    tile_candidates(i0, j0, psi, psi_max, runner_up, cand);
    const int j1 = std::min(m_, j0 + tile_);
    for (int i = i0; i < i1; ++i) {
      const double x1 = (i + 0.5) / m_;
      for (int j = j0; j < j1; ++j) {
        const double x2 = (j + 0.5) / m_;
        double best = kInf, second = kInf;
        std::int32_t owner = -1, second_owner = -1;
        // Candidates ascend by index, so strict comparison keeps the lowest
        // index on ties.
        for (const Slot& s : cand) {
          const double v = wrapped_sq(x1, s.x1) + wrapped_sq(x2, s.x2) -
                           psi[static_cast<std::size_t>(s.index)];
          if (v < best) {
            second = best;
            second_owner = owner;
            best = v;
            owner = s.index;
          } else if (v < second) {
            second = v;
            second_owner = s.index;
          }
        }
        const std::size_t idx = static_cast<std::size_t>(i) * m_ + j;
        out.owner[idx] = owner;
        out.best[idx] = best;
        if (runner_up) {
          out.runner_up[idx] = second;
          out.runner_owner[idx] = second_owner;
        }
      }
    }
  }
}

}  // namespace matchlab::detail
