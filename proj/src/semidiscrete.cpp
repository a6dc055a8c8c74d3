#include "matchlab/semidiscrete.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <functional>
#include <numeric>
#include <queue>
#include <string>

#include "matchlab/error.hpp"
#include "pixel_sweep.hpp"

namespace matchlab {

using detail::PixelSweeper;
using detail::SweepResult;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Problems up to this many (site, pixel) pairs get the exact finishing phase.
constexpr double kExactBudget = 4194304.0;
constexpr std::size_t kExactSites = 256;
// Relative slack for comparing dual values: two evaluations of the same
// dual on the optimal face differ only by summation rounding.
constexpr double kDualRounding = 1e-12;

struct CountWindow {
  std::int64_t lo = 0;
  std::int64_t hi = 0;
  double target = 0.0;  // m^2 / n
};

CountWindow count_window(std::size_t n, std::int64_t m2, double tol) {
  CountWindow w;
  w.target = static_cast<double>(m2) / static_cast<double>(n);
  // |c/m^2 - 1/n| <= tol/n  <=>  |c n - m^2| <= tol m^2
  const double slack = tol * static_cast<double>(m2);
  const double nd = static_cast<double>(n);
  w.lo = static_cast<std::int64_t>(std::ceil((static_cast<double>(m2) - slack) / nd));
  w.hi = static_cast<std::int64_t>(std::floor((static_cast<double>(m2) + slack) / nd));
  while (w.lo > 0 && std::abs(static_cast<double>(w.lo - 1) * nd - m2) <= slack) --w.lo;
  while (std::abs(static_cast<double>(w.lo) * nd - m2) > slack && w.lo <= w.hi) ++w.lo;
  while (std::abs(static_cast<double>(w.hi + 1) * nd - m2) <= slack) ++w.hi;
  while (w.hi >= w.lo && std::abs(static_cast<double>(w.hi) * nd - m2) > slack) --w.hi;
  return w;
}

double residual_of(const std::vector<std::int64_t>& counts, std::int64_t m2) {
  const double n = static_cast<double>(counts.size());
  double worst = 0.0;
  for (auto c : counts) worst = std::max(worst, std::abs(static_cast<double>(c) / m2 - 1.0 / n));
  return worst;
}

// sum_i |count_i - mean count|
double spread(const std::vector<std::int64_t>& counts) {
  double mean = 0.0;
  for (auto c : counts) mean += static_cast<double>(c);
  mean /= static_cast<double>(counts.size());
  double total = 0.0;
  for (auto c : counts) total += std::abs(static_cast<double>(c) - mean);
  return total;
}

bool within(const std::vector<std::int64_t>& counts, const CountWindow& w) {
  return std::all_of(counts.begin(), counts.end(),
                     [&](std::int64_t c) { return c >= w.lo && c <= w.hi; });
}

void center(std::vector<double>& psi) {
  const double mean = std::accumulate(psi.begin(), psi.end(), 0.0) / static_cast<double>(psi.size());
  for (double& p : psi) p -= mean;
}

class Solver {
 public:
  Solver(const PointSample& sample, int m, double tol, int max_iters)
      : sample_(sample),
        n_(sample.size()),
        m_(m),
        m2_(static_cast<std::int64_t>(m) * m),
        tol_(tol),
        max_iters_(max_iters),
        window_(count_window(n_, m2_, tol)),
        sweeper_(sample.points, m),
        psi_(n_, 0.0) {}

  SemidiscreteSolution run();

 private:
  double dual(const std::vector<double>& psi, const SweepResult& sw) const {
    return std::accumulate(psi.begin(), psi.end(), 0.0) / static_cast<double>(n_) +
           sw.best_sum / static_cast<double>(m2_);
  }
  void accept(std::vector<double> psi, SweepResult sw) {
    psi_ = std::move(psi);
    sw_ = std::move(sw);
    phi_ = dual(psi_, sw_);
    residual_ = residual_of(sw_.counts, m2_);
    sol_.dual_trajectory.push_back(phi_);
    sol_.residual_trajectory.push_back(residual_);
  }
  bool converged() const { return within(sw_.counts, window_); }
  static bool not_lower(double after, double before) {
    return after >= before - kDualRounding * std::abs(before);
  }

  bool capture_empty();
  bool newton_step();
  bool polish_pass();
  void exact_finish();
  void sparse_finish();
  double plan_dual(const std::vector<std::int32_t>& plan) const;
  std::vector<std::vector<double>> strict_shifts(const std::vector<double>& gap,
                                                 const std::vector<std::int64_t>& counts) const;
  [[noreturn]] void fail(const std::string& why) const {
    throw ConvergenceError("semidiscrete solve: " + why + " (n = " + std::to_string(n_) +
                               ", m = " + std::to_string(m_) +
                               ", residual = " + std::to_string(residual_) + ")",
                           sol_.residual_trajectory);
  }

  const PointSample& sample_;
  std::size_t n_;
  int m_;
  std::int64_t m2_;
  double tol_;
  int max_iters_;
  CountWindow window_;
  PixelSweeper sweeper_;
  std::vector<double> psi_;
  SweepResult sw_;
  double phi_ = -kInf;
  double residual_ = kInf;
  SemidiscreteSolution sol_;
};

// Raise the weight of each empty site until it holds floor(m^2/n) pixels,
// holding the others fixed. Along that coordinate the dual is concave with
// slope 1/n - count/m^2, so stopping at count <= m^2/n cannot lower it.
bool Solver::capture_empty() {
  bool changed = false;
  const auto k = static_cast<std::size_t>(std::floor(window_.target));
  for (std::size_t j = 0; j < n_; ++j) {
    if (sw_.counts[j] != 0) continue;
    std::vector<double> tau(static_cast<std::size_t>(m2_));
    for (std::size_t p = 0; p < tau.size(); ++p) {
      tau[p] = sweeper_.value(p, j, psi_) + psi_[j] - sw_.best[p];
    }
    std::nth_element(tau.begin(), tau.begin() + static_cast<std::ptrdiff_t>(k), tau.end());
    const double upper = tau[k];
    const double lower = *std::max_element(tau.begin(), tau.begin() + static_cast<std::ptrdiff_t>(k));
    std::vector<double> trial = psi_;
    trial[j] = lower < upper ? 0.5 * (lower + upper) : lower;
    center(trial);
    SweepResult sw;
    sweeper_.sweep(trial, sw);
    if (dual(trial, sw) >= phi_) {
      accept(std::move(trial), std::move(sw));
      changed = true;
    }
  }
  return changed;
}

// Damped Newton step. The Hessian of the dual is minus the weighted graph
// Laplacian of cell adjacency, with weights |shared boundary| / (2 |X_a - X_b|)
// estimated from pixel pairs straddling each boundary.
bool Solver::newton_step() {
  struct Edge {
    std::int32_t a, b;
    double w;
  };
  std::vector<Edge> edges;
  const std::vector<std::int32_t>& owner = sw_.owner;
  const double inv_m = 1.0 / m_;
  auto add_pair = [&](std::size_t p, std::size_t q, Vec2 mid) {
    const std::int32_t a = owner[p], b = owner[q];
    if (a == b) return;
    const TorusPoint here = TorusPoint::wrap(mid);
    const Vec2 d = nearest_image(sample_.points[static_cast<std::size_t>(b)], here).vec() -
                   nearest_image(sample_.points[static_cast<std::size_t>(a)], here).vec();
    const double l1 = std::abs(d.x1) + std::abs(d.x2);
    if (l1 <= 0.0) return;
    edges.push_back({std::min(a, b), std::max(a, b), inv_m / (2.0 * l1)});
  };
  for (int i = 0; i < m_; ++i) {
    for (int j = 0; j < m_; ++j) {
      const std::size_t p = static_cast<std::size_t>(i) * m_ + j;
      const std::size_t right = static_cast<std::size_t>((i + 1) % m_) * m_ + j;
      const std::size_t up = static_cast<std::size_t>(i) * m_ + (j + 1) % m_;
      add_pair(p, right, {(i + 1.0) * inv_m, (j + 0.5) * inv_m});
      add_pair(p, up, {(i + 0.5) * inv_m, (j + 1.0) * inv_m});
    }
  }
  if (edges.empty()) return false;
  std::sort(edges.begin(), edges.end(),
            [](const Edge& x, const Edge& y) { return x.a != y.a ? x.a < y.a : x.b < y.b; });
  std::vector<Edge> merged;
  for (const Edge& e : edges) {
    if (!merged.empty() && merged.back().a == e.a && merged.back().b == e.b) {
      merged.back().w += e.w;
    } else {
      merged.push_back(e);
    }
  }

  // Weighted adjacency of the cells.
  std::vector<std::vector<std::pair<std::int32_t, double>>> adj(n_);
  std::vector<double> diag(n_, 0.0);
  for (const Edge& e : merged) {
    adj[static_cast<std::size_t>(e.a)].push_back({e.b, e.w});
    adj[static_cast<std::size_t>(e.b)].push_back({e.a, e.w});
    diag[static_cast<std::size_t>(e.a)] += e.w;
    diag[static_cast<std::size_t>(e.b)] += e.w;
  }
  auto apply = [&](const std::vector<double>& x, std::vector<double>& y) {
    for (std::size_t a = 0; a < n_; ++a) {
      double s = diag[a] * x[a];
      for (auto [b, w] : adj[a]) s -= w * x[static_cast<std::size_t>(b)];
      y[a] = s;
    }
  };
  std::vector<double> g(n_);
  for (std::size_t a = 0; a < n_; ++a) {
    g[a] = 1.0 / static_cast<double>(n_) - static_cast<double>(sw_.counts[a]) / m2_;
  }
  center(g);

  // Jacobi-preconditioned CG on the mean-zero subspace.
  std::vector<double> x(n_, 0.0), r = g, z(n_), p(n_), q(n_);
  auto precondition = [&](const std::vector<double>& in, std::vector<double>& out) {
    for (std::size_t a = 0; a < n_; ++a) out[a] = diag[a] > 0.0 ? in[a] / diag[a] : 0.0;
    center(out);
  };
  precondition(r, z);
  p = z;
  double rz = std::inner_product(r.begin(), r.end(), z.begin(), 0.0);
  const double stop = 1e-20 * std::max(1e-300, std::inner_product(g.begin(), g.end(), g.begin(), 0.0));
  for (std::size_t it = 0; it < 4 * n_ + 50; ++it) {
    apply(p, q);
    const double pq = std::inner_product(p.begin(), p.end(), q.begin(), 0.0);
    if (!(pq > 0.0)) break;
    const double alpha = rz / pq;
    for (std::size_t a = 0; a < n_; ++a) {
      x[a] += alpha * p[a];
      r[a] -= alpha * q[a];
    }
    if (std::inner_product(r.begin(), r.end(), r.begin(), 0.0) <= stop) break;
    precondition(r, z);
    const double rz_next = std::inner_product(r.begin(), r.end(), z.begin(), 0.0);
    const double beta = rz_next / rz;
    rz = rz_next;
    for (std::size_t a = 0; a < n_; ++a) p[a] = z[a] + beta * p[a];
  }

  for (double step = 1.0; step >= 1.0 / 1024.0; step *= 0.5) {
    std::vector<double> trial(n_);
    for (std::size_t a = 0; a < n_; ++a) trial[a] = psi_[a] + step * x[a];
    center(trial);
    SweepResult sw;
    sweeper_.sweep(trial, sw);
    if (sw.empty_cells() == 0 && dual(trial, sw) >= phi_ &&
        (residual_of(sw.counts, m2_) < residual_ || spread(sw.counts) < spread(sw_.counts))) {
      accept(std::move(trial), std::move(sw));
      return true;
    }
  }
  return false;
}

// One Gauss-Seidel pass of exact coordinate maximizations over the cells
// whose count is off k. For site j with the others fixed, pixel p joins
// cell j once psi_j exceeds tau_p = d(p, X_j)^2 - U_p, U_p being the best
// value among the other sites; psi_j is placed between the k-th and
// (k+1)-th smallest thresholds, k = round(m^2/n). Thresholds are gathered in
// a box around X_j that must contain the whole cell, and pixels outside it
// are bounded by their current best value. A full sweep then verifies that
// the dual did not decrease.
bool Solver::polish_pass() {
  SweepResult st;
  sweeper_.sweep(psi_, st, true);
  std::vector<double> psi = psi_;
  // Upper bounds of the best value over square pixel blocks.
  const int bs = std::max(1, m_ / 64);
  const int nb = (m_ + bs - 1) / bs;
  std::vector<double> block_max(static_cast<std::size_t>(nb) * nb, -kInf);
  auto block_of = [&](std::size_t p) {
    return static_cast<std::size_t>(static_cast<int>(p / m_) / bs) * nb + static_cast<int>(p % m_) / bs;
  };
  for (std::size_t p = 0; p < st.best.size(); ++p) {
    double& b = block_max[block_of(p)];
    b = std::max(b, st.best[p]);
  }
  // Smallest d(p, X_j)^2 - best_p over pixels outside a box of the given inner radius.
  auto outside_bound = [&](const Vec2& x, double inner) {
    double lo = kInf;
    for (int bi = 0; bi < nb; ++bi) {
      double d1 = std::abs(x.x1 - (bi * bs + 0.5) / m_);
      d1 = std::min(d1, 1.0 - d1);
      const double e1 = std::max(0.0, d1 - (bs - 1.0) / m_);
      for (int bj = 0; bj < nb; ++bj) {
        double d2 = std::abs(x.x2 - (bj * bs + 0.5) / m_);
        d2 = std::min(d2, 1.0 - d2);
        const double e2 = std::max(0.0, d2 - (bs - 1.0) / m_);
        const double dist = std::max(e1 * e1 + e2 * e2, inner * inner);
        lo = std::min(lo, dist - block_max[static_cast<std::size_t>(bi) * nb + bj]);
      }
    }
    return lo;
  };
  const auto k = static_cast<std::size_t>(std::llround(window_.target));
  const int base_half = static_cast<int>(std::ceil(1.5 * m_ / std::sqrt(static_cast<double>(n_)))) + 1;
  std::vector<std::size_t> box;
  std::vector<double> tau;
  bool moved = false;
  for (std::size_t j = 0; j < n_; ++j) {
    if (st.counts[j] == static_cast<std::int64_t>(k)) continue;
    const Vec2 x = sample_.points[j].vec();
    const int ci = static_cast<int>(x.x1 * m_), cj = static_cast<int>(x.x2 * m_);
    double chosen = 0.0;
    bool placed = false;
    for (int half = base_half;; half *= 2) {
      box.clear();
      tau.clear();
      const bool whole = 2 * half + 1 >= m_;
      const int span = whole ? m_ : 2 * half + 1;
      std::int64_t own = 0;
      for (int a = 0; a < span; ++a) {
        const int i = whole ? a : ((ci - half + a) % m_ + m_) % m_;
        for (int b = 0; b < span; ++b) {
          const int jj = whole ? b : ((cj - half + b) % m_ + m_) % m_;
          const std::size_t p = static_cast<std::size_t>(i) * m_ + jj;
          const bool mine = st.owner[p] == static_cast<std::int32_t>(j);
          own += mine;
          const double other = mine ? st.runner_up[p] : st.best[p];
          box.push_back(p);
          tau.push_back(sweeper_.value(p, j, psi) + psi[j] - other);
        }
      }
      // Pixels outside the box lie at least `inner` from X_j.
      const double inner = whole ? kInf : (half - 1.0) / m_;
      if (whole || (own == st.counts[j] && tau.size() > k)) {
        const double bound = whole ? kInf : outside_bound(x, inner);
        std::vector<double> sorted = tau;
        std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(k),
                         sorted.end());
        const double upper = std::min(sorted[k], bound);
        const double lower =
            k == 0 ? -kInf
                   : *std::max_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(k));
        if (lower < upper) {
          chosen = k == 0 ? upper - 1.0 : 0.5 * (lower + upper);
          placed = true;
        }
      }
      if (placed || whole) break;
    }
    if (!placed) continue;
    psi[j] = chosen;
    moved = true;
    // Refresh the box pixels against the new psi_j.
    for (std::size_t q = 0; q < box.size(); ++q) {
      const std::size_t p = box[q];
      const auto sj = static_cast<std::int32_t>(j);
      const double vj = sweeper_.value(p, j, psi);
      const bool mine = st.owner[p] == sj;
      const double other = mine ? st.runner_up[p] : st.best[p];
      const std::int32_t other_owner = mine ? st.runner_owner[p] : st.owner[p];
      if (vj < other || (vj == other && sj < other_owner)) {
        if (!mine) {
          --st.counts[static_cast<std::size_t>(other_owner)];
          ++st.counts[j];
        }
        st.owner[p] = sj;
        st.best[p] = vj;
        st.runner_up[p] = other;
        st.runner_owner[p] = other_owner;
      } else {
        if (mine) {
          --st.counts[j];
          ++st.counts[static_cast<std::size_t>(other_owner)];
        }
        st.owner[p] = other_owner;
        st.best[p] = other;
        if (mine || st.runner_owner[p] == sj || vj < st.runner_up[p]) {
          st.runner_up[p] = vj;
          st.runner_owner[p] = sj;
        }
        double& b = block_max[block_of(p)];
        b = std::max(b, other);
      }
    }
  }
  if (!moved) return false;
  center(psi);
  SweepResult sw;
  sweeper_.sweep(psi, sw);
  if (sw.empty_cells() > 0 || dual(psi, sw) < phi_) return false;
  // Either way the dual did not decrease; the caller only tracks progress.
  const bool better = residual_of(sw.counts, m2_) < residual_ || spread(sw.counts) < spread(sw_.counts);
  accept(std::move(psi), std::move(sw));
  return better;
}

// Successive shortest paths on the site graph. Edge a -> b carries the
// smallest increase of psi_b - psi_a that lets b take a pixel of cell a.
// Sources are the cells above m^2/n, so raising the potentials of every other
// site never lowers the dual.
void Solver::exact_finish() {
  const auto cells = static_cast<std::size_t>(m2_);
  std::vector<std::int32_t> plan = sw_.owner;
  std::vector<std::int64_t> counts = sw_.counts;
  std::vector<double> gap(n_ * n_);
  std::vector<std::size_t> witness(n_ * n_);
  // Row a of the gap matrix from the pixels of cell a (all rows when a = n).
  auto rebuild = [&](std::size_t row = static_cast<std::size_t>(-1)) {
    if (row < n_) {
      std::fill(gap.begin() + static_cast<std::ptrdiff_t>(row * n_),
                gap.begin() + static_cast<std::ptrdiff_t>((row + 1) * n_), kInf);
    } else {
      std::fill(gap.begin(), gap.end(), kInf);
    }
    for (std::size_t p = 0; p < cells; ++p) {
      const auto a = static_cast<std::size_t>(plan[p]);
      if (row < n_ && a != row) continue;
      const double own = sweeper_.value(p, a, psi_);
      for (std::size_t b = 0; b < n_; ++b) {
        if (b == a) continue;
        const double g = sweeper_.value(p, b, psi_) - own;
        if (g < gap[a * n_ + b]) {
          gap[a * n_ + b] = g;
          witness[a * n_ + b] = p;
        }
      }
    }
  };
  auto plan_dual = [&]() {
    double total = 0.0;
    for (int i = 0; i < m_; ++i) {
      double row = 0.0;
      for (int j = 0; j < m_; ++j) {
        const std::size_t p = static_cast<std::size_t>(i) * m_ + j;
        row += sweeper_.value(p, static_cast<std::size_t>(plan[p]), psi_);
      }
      total += row;
    }
    return std::accumulate(psi_.begin(), psi_.end(), 0.0) / static_cast<double>(n_) +
           total / static_cast<double>(m2_);
  };

  // Whole pixels can balance every cell exactly when n divides m^2; the
  // dual is then unchanged by any potential shift.
  CountWindow goal = window_;
  if (m2_ % static_cast<std::int64_t>(n_) == 0) goal.lo = goal.hi = m2_ / static_cast<std::int64_t>(n_);
  rebuild();
  while (!within(counts, goal)) {
    const bool short_cells = std::any_of(counts.begin(), counts.end(),
                                         [&](std::int64_t c) { return c < goal.lo; });
    std::vector<char> sink(n_, 0);
    std::vector<double> dist(n_, kInf);
    std::vector<std::int32_t> prev(n_, -1);
    for (std::size_t a = 0; a < n_; ++a) {
      const double c = static_cast<double>(counts[a]);
      if (c > window_.target) dist[a] = 0.0;
      sink[a] = short_cells ? counts[a] < goal.lo : c < window_.target;
    }
    // Dense Dijkstra from all sources at once.
    std::vector<char> done(n_, 0);
    std::size_t target = n_;
    while (true) {
      std::size_t u = n_;
      for (std::size_t a = 0; a < n_; ++a) {
        if (!done[a] && dist[a] < kInf && (u == n_ || dist[a] < dist[u])) u = a;
      }
      if (u == n_) break;
      done[u] = 1;
      if (sink[u]) {
        target = u;
        break;
      }
      if (counts[u] == 0) continue;
      for (std::size_t b = 0; b < n_; ++b) {
        const double cand = dist[u] + std::max(0.0, gap[u * n_ + b]);
        if (!done[b] && cand < dist[b]) {
          dist[b] = cand;
          prev[b] = static_cast<std::int32_t>(u);
        }
      }
    }
    if (target == n_) fail("no augmenting path in the exact phase");
    const double reach = dist[target];
    std::vector<double> delta(n_);
    for (std::size_t a = 0; a < n_; ++a) {
      delta[a] = std::min(dist[a], reach);
      psi_[a] += delta[a];
    }
    for (std::size_t a = 0; a < n_; ++a) {
      for (std::size_t b = 0; b < n_; ++b) gap[a * n_ + b] += delta[a] - delta[b];
    }
    std::vector<std::size_t> touched{target};
    for (std::size_t b = target; prev[b] >= 0; b = static_cast<std::size_t>(prev[b])) {
      const auto a = static_cast<std::size_t>(prev[b]);
      plan[witness[a * n_ + b]] = static_cast<std::int32_t>(b);
      --counts[a];
      ++counts[b];
      touched.push_back(a);
    }
    for (auto a : touched) rebuild(a);
    center(psi_);
    sol_.dual_trajectory.push_back(plan_dual());
    sol_.residual_trajectory.push_back(residual_of(counts, m2_));
  }

  // The plan is now optimal but its cells touch along ties. Move psi into
  // the interior of the optimal face so that argmin with lowest-index ties
  // reproduces the plan, choosing a shift that does not lower the dual.
  rebuild();
  const double before = plan_dual();
  const std::vector<double> base = psi_;
  auto shifts = strict_shifts(gap, counts);
  shifts.insert(shifts.begin(), std::vector<double>(n_, 0.0));
  // Prefer a shift whose recorded dual does not drop even by rounding.
  const double last = sol_.dual_trajectory.back();
  for (bool strict : {true, false}) {
    for (const auto& pi : shifts) {
      const bool zero = std::all_of(pi.begin(), pi.end(), [](double v) { return v == 0.0; });
      for (double scale = 1.0; scale >= 1.0 / 1024.0; scale *= 0.5) {
        if (zero && scale < 1.0) break;
        std::vector<double> psi = base;
        for (std::size_t a = 0; a < n_; ++a) psi[a] += scale * pi[a];
        center(psi);
        SweepResult sw;
        sweeper_.sweep(psi, sw);
        if (!within(sw.counts, window_) || sw.empty_cells() > 0) continue;
        const double phi = dual(psi, sw);
        if (strict ? phi < std::max(before, last) : !not_lower(phi, before)) continue;
        accept(std::move(psi), std::move(sw));
        return;
      }
    }
  }
  fail("tied pixels prevent an exact whole-pixel assignment");
}

double Solver::plan_dual(const std::vector<std::int32_t>& plan) const {
  double total = 0.0;
  for (int i = 0; i < m_; ++i) {
    double row = 0.0;
    for (int j = 0; j < m_; ++j) {
      const std::size_t p = static_cast<std::size_t>(i) * m_ + j;
      row += sweeper_.value(p, static_cast<std::size_t>(plan[p]), psi_);
    }
    total += row;
  }
  return std::accumulate(psi_.begin(), psi_.end(), 0.0) / static_cast<double>(n_) +
         total / static_cast<double>(m2_);
}

// Successive shortest paths for problems too large for the dense gap matrix.
// Only edges with gap <= limit are collected; a path shorter than the limit
// is then a true shortest path and every dropped edge keeps a positive gap.
// Short cells are filled from all cells above target (raising potentials);
// otherwise overfull cells drain into all cells below target (lowering them).
// Either way the sites that move hold no mass on the wrong side of m^2/n, so
// the dual does not decrease.
void Solver::sparse_finish() {
  struct Edge {
    std::int32_t site;  // head in `out`, tail in `in`
    double gap;
    std::size_t witness;
  };
  const auto cells = static_cast<std::size_t>(m2_);
  std::vector<std::int32_t> plan = sw_.owner;
  std::vector<std::int64_t> counts = sw_.counts;

  const int nb = std::max(1, static_cast<int>(std::sqrt(static_cast<double>(n_) / 2.0)));
  std::vector<std::vector<std::int32_t>> bucket(static_cast<std::size_t>(nb) * nb);
  for (std::size_t j = 0; j < n_; ++j) {
    const Vec2 x = sample_.points[j].vec();
    const int bi = std::min(nb - 1, static_cast<int>(x.x1 * nb));
    const int bj = std::min(nb - 1, static_cast<int>(x.x2 * nb));
    bucket[static_cast<std::size_t>(bi) * nb + bj].push_back(static_cast<std::int32_t>(j));
  }
  auto range = [&](double c, double r) {
    const int lo = static_cast<int>(std::floor((c - r) * nb));
    const int hi = static_cast<int>(std::floor((c + r) * nb));
    return hi - lo + 1 >= nb ? std::pair{0, nb - 1} : std::pair{lo, hi};
  };

  std::vector<std::vector<Edge>> out(n_), in(n_);
  std::vector<std::vector<std::size_t>> members(n_);
  auto collect = [&](double limit) {
    for (auto& m : members) m.clear();
    for (std::size_t p = 0; p < cells; ++p) members[static_cast<std::size_t>(plan[p])].push_back(p);
    const double psi_max = *std::max_element(psi_.begin(), psi_.end());
    std::vector<double> best(n_, kInf);
    std::vector<std::size_t> where(n_);
    std::vector<std::int32_t> touched;
    for (std::size_t a = 0; a < n_; ++a) {
      out[a].clear();
      in[a].clear();
    }
    for (std::size_t a = 0; a < n_; ++a) {
      touched.clear();
      for (auto p : members[a]) {
        const double own = sweeper_.value(p, a, psi_);
        const double r2 = limit + own + psi_max;
        if (r2 < 0.0) continue;
        const double r = std::sqrt(r2);
        const Vec2 c = sweeper_.centre(p);
        const auto [i0, i1] = range(c.x1, r);
        const auto [j0, j1] = range(c.x2, r);
        for (int bi = i0; bi <= i1; ++bi) {
          for (int bj = j0; bj <= j1; ++bj) {
            const auto key = static_cast<std::size_t>((bi % nb + nb) % nb) * nb + (bj % nb + nb) % nb;
            for (auto b : bucket[key]) {
              const auto sb = static_cast<std::size_t>(b);
              if (sb == a) continue;
              const double g = sweeper_.value(p, sb, psi_) - own;
              if (g > limit) continue;
              if (best[sb] == kInf) touched.push_back(b);
              if (g < best[sb]) {
                best[sb] = g;
                where[sb] = p;
              }
            }
          }
        }
      }
      for (auto b : touched) {
        const auto sb = static_cast<std::size_t>(b);
        out[a].push_back({b, best[sb], where[sb]});
        in[sb].push_back({static_cast<std::int32_t>(a), best[sb], where[sb]});
        best[sb] = kInf;
      }
    }
  };

  const double spacing = 1.0 / (m_ * std::sqrt(static_cast<double>(n_)));
  const double widest = 2.0 + *std::max_element(psi_.begin(), psi_.end()) -
                        *std::min_element(psi_.begin(), psi_.end());
  double limit = spacing;
  collect(limit);
  using Item = std::pair<double, std::int32_t>;
  while (!within(counts, window_)) {
    const bool forward = std::any_of(counts.begin(), counts.end(),
                                     [&](std::int64_t c) { return c < window_.lo; });
    const auto& adj = forward ? out : in;
    std::vector<double> dist(n_, kInf);
    std::vector<std::int32_t> link(n_, -1);
    std::vector<std::size_t> via(n_);
    std::vector<char> done(n_, 0);
    std::priority_queue<Item, std::vector<Item>, std::greater<>> heap;
    for (std::size_t a = 0; a < n_; ++a) {
      const double c = static_cast<double>(counts[a]);
      if (forward ? c > window_.target : c < window_.target) {
        dist[a] = 0.0;
        heap.emplace(0.0, static_cast<std::int32_t>(a));
      }
    }
    std::size_t target = n_;
    while (!heap.empty()) {
      const auto [d, su] = heap.top();
      heap.pop();
      const auto u = static_cast<std::size_t>(su);
      if (done[u]) continue;
      done[u] = 1;
      if (forward ? counts[u] < window_.lo : counts[u] > window_.hi) {
        target = u;
        break;
      }
      for (const Edge& e : adj[u]) {
        const auto v = static_cast<std::size_t>(e.site);
        const double cand = d + std::max(0.0, e.gap);
        if (!done[v] && cand < dist[v]) {
          dist[v] = cand;
          link[v] = su;
          via[v] = e.witness;
          heap.emplace(cand, e.site);
        }
      }
    }
    if (target == n_ || dist[target] > limit) {
      if (limit > widest) fail("no augmenting path in the sparse exact phase");
      limit *= 4.0;
      collect(limit);
      continue;
    }
    const double reach = dist[target];
    for (std::size_t a = 0; a < n_; ++a) psi_[a] += (forward ? 1.0 : -1.0) * std::min(dist[a], reach);
    // Move the witness pixel of every path edge to the head of that edge.
    for (std::size_t b = target; link[b] >= 0; b = static_cast<std::size_t>(link[b])) {
      const auto a = static_cast<std::size_t>(link[b]);
      const std::size_t from = forward ? a : b, to = forward ? b : a;
      plan[via[b]] = static_cast<std::int32_t>(to);
      --counts[from];
      ++counts[to];
    }
    center(psi_);
    sol_.dual_trajectory.push_back(plan_dual(plan));
    sol_.residual_trajectory.push_back(residual_of(counts, m2_));
    collect(limit);
  }

  // Break the ties left along the augmenting paths: lower (or raise) sites so
  // that every near-zero gap becomes a small positive margin.
  const double before = plan_dual(plan);
  const double last = sol_.dual_trajectory.back();
  std::vector<std::vector<double>> candidates{psi_};
  constexpr double kTight = 1e-10, kMargin = 1e-13;
  collect(kTight);
  for (bool lower_heads : {true, false}) {
    std::vector<double> pi(n_, 0.0);
    bool settled = false;
    for (std::size_t round = 0; round <= n_ && !settled; ++round) {
      settled = true;
      for (std::size_t a = 0; a < n_; ++a) {
        for (const Edge& e : out[a]) {
          const auto b = static_cast<std::size_t>(e.site);
          const double slack = e.gap - kMargin;
          if (lower_heads && pi[a] + slack < pi[b]) {
            pi[b] = pi[a] + slack;
            settled = false;
          } else if (!lower_heads && pi[b] - slack > pi[a]) {
            pi[a] = pi[b] - slack;
            settled = false;
          }
        }
      }
    }
    const double size = std::abs(*std::max_element(pi.begin(), pi.end(),
                                                   [](double x, double y) { return std::abs(x) < std::abs(y); }));
    if (!settled || size > 0.25 * kTight) continue;
    std::vector<double> psi = psi_;
    for (std::size_t a = 0; a < n_; ++a) psi[a] += pi[a];
    center(psi);
    candidates.push_back(std::move(psi));
  }
  std::vector<SweepResult> sweeps(candidates.size());
  for (std::size_t c = 0; c < candidates.size(); ++c) sweeper_.sweep(candidates[c], sweeps[c]);
  // Prefer a candidate whose recorded dual does not drop even by rounding.
  for (bool strict : {true, false}) {
    for (std::size_t c = 0; c < candidates.size(); ++c) {
      const SweepResult& sw = sweeps[c];
      if (!within(sw.counts, window_) || sw.empty_cells() > 0) continue;
      const double phi = dual(candidates[c], sw);
      if (strict ? phi < std::max(before, last) : !not_lower(phi, before)) continue;
      accept(std::move(candidates[c]), std::move(sweeps[c]));
      return;
    }
  }
  fail("tied pixels prevent an exact whole-pixel assignment");
}

// Potential shifts pi with pi_b - pi_a <= gap_ab - mu/2 for every edge of the
// gap graph, mu being its minimum cycle mean (Karp). Applied to psi they make
// every gap at least mu/2 > 0 while the plan stays optimal. Returns the
// largest solution <= 0 and the smallest >= 0.
std::vector<std::vector<double>> Solver::strict_shifts(const std::vector<double>& gap,
                                                       const std::vector<std::int64_t>& counts) const {
  const std::size_t n = n_;
  auto weight = [&](std::size_t a, std::size_t b) {
    return counts[a] > 0 && a != b ? gap[a * n + b] : kInf;
  };
  std::vector<std::vector<double>> walk(n + 1, std::vector<double>(n, kInf));
  std::fill(walk[0].begin(), walk[0].end(), 0.0);
  for (std::size_t k = 1; k <= n; ++k) {
    for (std::size_t a = 0; a < n; ++a) {
      if (walk[k - 1][a] == kInf) continue;
      for (std::size_t b = 0; b < n; ++b) {
        const double w = weight(a, b);
        if (w < kInf) walk[k][b] = std::min(walk[k][b], walk[k - 1][a] + w);
      }
    }
  }
  double mu = kInf;
  for (std::size_t v = 0; v < n; ++v) {
    if (walk[n][v] == kInf) continue;
    double worst = -kInf;
    for (std::size_t k = 0; k < n; ++k) {
      if (walk[k][v] < kInf) {
        worst = std::max(worst, (walk[n][v] - walk[k][v]) / static_cast<double>(n - k));
      }
    }
    mu = std::min(mu, worst);
  }
  if (mu == kInf) return {std::vector<double>(n, 0.0)};
  if (!(mu > 0.0)) return {};
  // Bellman-Ford relaxation; `forward` lowers heads, otherwise tails rise.
  auto relax = [&](bool forward) {
    std::vector<double> pi(n, 0.0);
    for (std::size_t round = 0; round < n; ++round) {
      bool moved = false;
      for (std::size_t a = 0; a < n; ++a) {
        for (std::size_t b = 0; b < n; ++b) {
          const double w = weight(a, b);
          if (w == kInf) continue;
          const double slack = w - 0.5 * mu;
          if (forward && pi[a] + slack < pi[b]) {
            pi[b] = pi[a] + slack;
            moved = true;
          } else if (!forward && pi[b] - slack > pi[a]) {
            pi[a] = pi[b] - slack;
            moved = true;
          }
        }
      }
      if (!moved) break;
    }
    return pi;
  };
  return {relax(true), relax(false)};
}

SemidiscreteSolution Solver::run() {
  SweepResult sw;
  sweeper_.sweep(psi_, sw);
  accept(psi_, std::move(sw));

  const bool exact_ok =
      n_ <= kExactSites && static_cast<double>(n_) * static_cast<double>(m2_) <= kExactBudget;
  int iters = 0;
  bool polishing = false;
  int idle = 0;  // consecutive polish passes without progress
  while (!converged()) {
    if (iters >= max_iters_) fail("iteration limit reached");
    ++iters;
    if (sw_.empty_cells() > 0) {
      if (capture_empty()) continue;
      if (exact_ok) {
        exact_finish();
      } else {
        sparse_finish();
      }
      break;
    }
    // Newton brings the cells to within pixel noise of their target; past
    // that point small problems finish exactly and large ones are polished
    // cell by cell.
    if (!polishing) {
      const double before = residual_;
      if (newton_step()) {
        // Close to the target, less than a halving means the step is working
        // against pixel noise.
        polishing = residual_ > 0.5 * before &&
                    residual_ * static_cast<double>(m2_) <= 0.1 * window_.target + 1.0;
        continue;
      }
    }
    if (exact_ok) {
      exact_finish();
      break;
    }
    polishing = true;
    idle = polish_pass() ? 0 : idle + 1;
    if (idle > 4) {
      // Coordinate ascent can stall on a kink of the dual.
      if (n_ > kExactSites) {
        sparse_finish();
      } else {
        exact_finish();
      }
      break;
    }
  }
  sol_.iterations = iters;

  sol_.grid_m = m_;
  sol_.sites = sample_.points;
  sol_.weights.psi = psi_;
  sol_.assignment = sw_.owner;
  sol_.cell_masses.resize(n_);
  for (std::size_t a = 0; a < n_; ++a) {
    sol_.cell_masses[a] = static_cast<double>(sw_.counts[a]) / static_cast<double>(m2_);
  }
  sol_.mass_residual = residual_;
  double cost = 0.0;
  for (int i = 0; i < m_; ++i) {
    double row = 0.0;
    for (int j = 0; j < m_; ++j) {
      const std::size_t p = static_cast<std::size_t>(i) * m_ + j;
      const TorusPoint c = TorusPoint::wrap(sweeper_.centre(p));
      row += dist_sq(c, sample_.points[static_cast<std::size_t>(sw_.owner[p])]);
    }
    cost += row;
  }
  sol_.cost = cost / static_cast<double>(m2_);
  return std::move(sol_);
}

}  // namespace

int default_grid(std::size_t n) {
  if (n == 0) throw InvalidArgument("default_grid: n must be >= 1");
  const double want = 16.0 * std::sqrt(static_cast<double>(n));
  int m = 16;
  while (m < want && m < 1024) m *= 2;
  return m;
}

SemidiscreteSolution solve(const PointSample& sample, int grid_m, double mass_tol, int max_iters) {
  const std::size_t n = sample.size();
  if (n == 0) throw InvalidArgument("solve: empty sample");
  if (grid_m < 16) throw InvalidArgument("solve: grid_m must be >= 16");
  const auto m2 = static_cast<std::int64_t>(grid_m) * grid_m;
  if (static_cast<std::int64_t>(n) > m2) {
    throw InvalidArgument("solve: n = " + std::to_string(n) + " exceeds the " +
                          std::to_string(m2) + " pixels of the grid");
  }
  if (!(mass_tol >= 1e-10 && mass_tol <= 1e-2)) {
    throw InvalidArgument("solve: mass_tol must lie in [1e-10, 1e-2]");
  }
  if (max_iters < 1) throw InvalidArgument("solve: max_iters must be >= 1");
  const CountWindow w = count_window(n, m2, mass_tol);
  const auto nn = static_cast<std::int64_t>(n);
  if (w.lo > w.hi || nn * w.lo > m2 || nn * w.hi < m2) {
    throw InvalidArgument("solve: no whole-pixel partition has every cell within mass_tol of 1/n (n = " +
                          std::to_string(n) + ", m = " + std::to_string(grid_m) + ")");
  }
  return Solver(sample, grid_m, mass_tol, max_iters).run();
}

}  // namespace matchlab
