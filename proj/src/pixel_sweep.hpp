#pragma once

// Laguerre assignment of pixel centres: owner(p) = argmin_i d(p, X_i)^2 - psi_i
// with ties to the lowest index, certified by a bucket ring search.

#include <cstdint>
#include <span>
#include <vector>

#include "matchlab/torus.hpp"

namespace matchlab::detail {

struct SweepResult {
  std::vector<std::int32_t> owner;
  std::vector<double> best;
  /// Second-smallest value over the other sites; filled on request.
  std::vector<double> runner_up;
  std::vector<std::int32_t> runner_owner;
  std::vector<std::int64_t> counts;
  /// sum_p best[p], accumulated row by row in a fixed order.
  double best_sum = 0.0;

  std::int64_t empty_cells() const;
  std::int64_t max_count_deviation(double target) const;
};

class PixelSweeper {
 public:
  PixelSweeper(std::span<const TorusPoint> sites, int m);

  int grid() const { return m_; }
  int buckets() const { return B_; }
  std::size_t sites() const { return sites_.size(); }

  /// Centre of pixel (i, j) = ((i + 1/2)/m, (j + 1/2)/m), index i*m + j.
  Vec2 centre(std::size_t index) const;

  void sweep(std::span<const double> psi, SweepResult& out, bool runner_up = false,
             bool parallel = true) const;

  /// Value d(p, X_site)^2 - psi_site.
  double value(std::size_t pixel, std::size_t site, std::span<const double> psi) const;

 private:
  struct Slot {
    double x1, x2;
    std::int32_t index;
  };
  void sweep_tile_row(int ti, std::span<const double> psi, double psi_max, SweepResult& out,
                      bool runner_up) const;
  /// Sites that can be nearest or runner-up somewhere in the given pixel block.
  void tile_candidates(int i0, int j0, std::span<const double> psi, double psi_max,
                       bool runner_up, std::vector<Slot>& cand) const;

  std::vector<TorusPoint> sites_;
  int m_;
  int B_;
  int tile_;  // pixels per tile side
  std::vector<std::int32_t> bucket_start_;  // B*B + 1 offsets into slots_
  std::vector<Slot> slots_;
};

}  // namespace matchlab::detail
