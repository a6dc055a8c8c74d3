#include <cmath>
#include <limits>
#include <ostream>

#include "matchlab/error.hpp"
#include "matchlab/semidiscrete.hpp"
#include "matchlab/spectral.hpp"

namespace matchlab {

MapValue map_apply(const SemidiscreteSolution& sol, const TorusPoint& y) {
  if (sol.sites.empty()) throw InvalidArgument("map_apply: empty solution");
  if (sol.weights.psi.size() != sol.sites.size()) {
    throw InvalidArgument("map_apply: weights do not match the sites");
  }
  double best = std::numeric_limits<double>::infinity();
  std::size_t owner = 0;
  for (std::size_t i = 0; i < sol.sites.size(); ++i) {
    const double v = dist_sq(y, sol.sites[i]) - sol.weights.psi[i];
    if (v < best) {
      best = v;
      owner = i;
    }
  }
  return {owner, nearest_image(sol.sites[owner], y)};
}

namespace {

struct Accum {
  double disp = 0, poisson = 0, nmap = 0, orth = 0, dir = 0, ftc = 0;
  Accum& operator+=(const Accum& o) {
    disp += o.disp;
    poisson += o.poisson;
    nmap += o.nmap;
    orth += o.orth;
    dir += o.dir;
    ftc += o.ftc;
    return *this;
  }
};

TransportIntegrals integrate(const SemidiscreteSolution& sol, double t, const KernelConfig& cfg) {
  const int m = sol.grid_m;
  const spectral::SpectralField field(sol.sites, t, cfg);
  const auto grid = field.grid(m);
  // Field at the sites, i.e. at T(y) for every y of the cell.
  std::vector<spectral::PointValues> at_site(sol.sites.size());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(sol.sites.size()); ++i) {
    at_site[static_cast<std::size_t>(i)] = field.at(sol.sites[static_cast<std::size_t>(i)].vec());
  }
  std::vector<Accum> rows(static_cast<std::size_t>(m));
#pragma omp parallel for schedule(static)
  for (int i = 0; i < m; ++i) {
    Accum row;
    for (int j = 0; j < m; ++j) {
      const std::size_t p = grid.index(i, j);
      const auto a = static_cast<std::size_t>(sol.assignment[p]);
      const TorusPoint y = TorusPoint::wrap((i + 0.5) / m, (j + 0.5) / m);
      const Vec2 d = nearest_image(sol.sites[a], y).vec();
      const Vec2 g{grid.g1[p], grid.g2[p]};
      const Vec2 gt = at_site[a].grad;
      const Vec2 e{d.x1 - g.x1, d.x2 - g.x2};
      const Vec2 et{d.x1 - gt.x1, d.x2 - gt.x2};
      row.disp += d.x1 * d.x1 + d.x2 * d.x2;
      row.poisson += et.x1 * et.x1 + et.x2 * et.x2;
      row.nmap += e.x1 * e.x1 + e.x2 * e.x2;
      row.orth += e.x1 * g.x1 + e.x2 * g.x2;
      row.dir += g.x1 * g.x1 + g.x2 * g.x2;
      row.ftc += at_site[a].value - grid.value[p];
    }
    rows[static_cast<std::size_t>(i)] = row;
  }
  Accum total;
  for (const auto& r : rows) total += r;
  const double w = 1.0 / (static_cast<double>(m) * m);
  return {total.disp * w, total.poisson * w, total.nmap * w,
          total.orth * w, total.dir * w,     total.ftc * w};
}

void check_solution(const SemidiscreteSolution& sol) {
  if (sol.sites.empty() || sol.grid_m < 1 ||
      sol.assignment.size() != static_cast<std::size_t>(sol.grid_m) * sol.grid_m) {
    throw InvalidArgument("transport_integrals: incomplete solution");
  }
}

}  // namespace

TransportIntegrals transport_integrals(const SemidiscreteSolution& sol, HeatTime t,
                                       const KernelConfig& cfg) {
  check_solution(sol);
  if (!(t.value() > 0.0)) throw DomainError("transport_integrals: requires t > 0");
  return integrate(sol, t.value(), cfg);
}

std::vector<TransportIntegrals> transport_integrals(const SemidiscreteSolution& sol,
                                                    const std::vector<double>& times,
                                                    const KernelConfig& cfg) {
  check_solution(sol);
  std::vector<TransportIntegrals> out;
  out.reserve(times.size());
  for (double t : times) {
    if (!(t > 0.0)) throw DomainError("transport_integrals: requires t > 0");
    out.push_back(integrate(sol, t, cfg));
  }
  return out;
}

void write_debug_dump(std::ostream& os, const SemidiscreteSolution& sol, const PointSample& sample) {
  const auto prec = os.precision(17);
  os << "# n=" << sol.size() << " m=" << sol.grid_m << " seed=" << sample.seed
     << " replica=" << sample.replica_index << '\n';
  os << "pixel_index,site_index\n";
  for (std::size_t p = 0; p < sol.assignment.size(); ++p) os << p << ',' << sol.assignment[p] << '\n';
  os << "site,psi\n";
  for (std::size_t i = 0; i < sol.weights.psi.size(); ++i) os << i << ',' << sol.weights.psi[i] << '\n';
  os.precision(prec);
}

}  // namespace matchlab
