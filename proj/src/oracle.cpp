// Exact pixel transport as a min-cost flow in integer units: every site
// supplies m^2 units and every pixel demands n, so all masses are whole.

#include <algorithm>
#include <cmath>
#include <string>

#include <boost/graph/adjacency_list.hpp>
#include <boost/graph/successive_shortest_path_nonnegative_weights.hpp>

#include "matchlab/error.hpp"
#include "matchlab/semidiscrete.hpp"

namespace matchlab {

namespace {

using Traits = boost::adjacency_list_traits<boost::vecS, boost::vecS, boost::directedS>;
using Graph = boost::adjacency_list<
    boost::vecS, boost::vecS, boost::directedS, boost::no_property,
    boost::property<boost::edge_capacity_t, long,
                    boost::property<boost::edge_residual_capacity_t, long,
                                    boost::property<boost::edge_reverse_t, Traits::edge_descriptor,
                                                    boost::property<boost::edge_weight_t, long>>>>>;
using Edge = Traits::edge_descriptor;

class FlowBuilder {
 public:
  explicit FlowBuilder(std::size_t vertices) : g_(vertices) {}

  Edge add(std::size_t u, std::size_t v, long cap, long cost) {
    const Edge e = boost::add_edge(u, v, g_).first;
    const Edge r = boost::add_edge(v, u, g_).first;
    boost::put(boost::edge_capacity, g_, e, cap);
    boost::put(boost::edge_capacity, g_, r, 0);
    boost::put(boost::edge_weight, g_, e, cost);
    boost::put(boost::edge_weight, g_, r, -cost);
    boost::put(boost::edge_reverse, g_, e, r);
    boost::put(boost::edge_reverse, g_, r, e);
    return e;
  }

  Graph& graph() { return g_; }

 private:
  Graph g_;
};

// Costs enter the flow as integers so that reduced weights never round
// below zero; the rounding moves the optimum by well under 1e-11.
constexpr int kCostBits = 40;

}  // namespace

std::pair<double, std::vector<std::int32_t>> exact_oracle(const PointSample& sample, int grid_m) {
  const std::size_t n = sample.size();
  if (n == 0 || n > 16) throw InvalidArgument("exact_oracle: requires 1 <= n <= 16");
  if (grid_m < 1 || grid_m > 32) throw InvalidArgument("exact_oracle: requires 1 <= grid_m <= 32");
  const auto cells = static_cast<std::size_t>(grid_m) * grid_m;
  const long supply = static_cast<long>(cells);
  const long demand = static_cast<long>(n);
  const double unit = 1.0 / (static_cast<double>(n) * static_cast<double>(cells));

  // Vertices: source, sites, pixels, sink.
  const std::size_t source = 0, sink = 1 + n + cells;
  FlowBuilder fb(sink + 1);
  std::vector<double> cost(n * cells);
  std::vector<Edge> arc(n * cells);
  for (std::size_t i = 0; i < n; ++i) fb.add(source, 1 + i, supply, 0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t p = 0; p < cells; ++p) {
      const auto a = static_cast<int>(p / grid_m), b = static_cast<int>(p % grid_m);
      const TorusPoint c = TorusPoint::wrap((a + 0.5) / grid_m, (b + 0.5) / grid_m);
      cost[i * cells + p] = dist_sq(c, sample.points[i]);
      arc[i * cells + p] =
          fb.add(1 + i, 1 + n + p, demand, std::lround(std::ldexp(cost[i * cells + p], kCostBits)));
    }
  }
  for (std::size_t p = 0; p < cells; ++p) fb.add(1 + n + p, sink, demand, 0);

  Graph& g = fb.graph();
  boost::successive_shortest_path_nonnegative_weights(g, source, sink);

  auto cap = boost::get(boost::edge_capacity, g);
  auto res = boost::get(boost::edge_residual_capacity, g);
  std::vector<long> flow(n * cells);
  long shipped = 0;
  for (std::size_t k = 0; k < flow.size(); ++k) {
    flow[k] = cap[arc[k]] - res[arc[k]];
    shipped += flow[k];
  }
  if (shipped != supply * static_cast<long>(n)) throw Error("exact_oracle: flow is not feasible");

  // Certificate: potentials on the residual bipartite graph (Bellman-Ford).
  // Site -> pixel arcs always have room; pixel -> site arcs exist where flow
  // is positive. Convergence within |V| rounds means no negative cycle.
  const std::size_t verts = n + cells;
  std::vector<double> pot(verts, 0.0);
  const double eps = 1e-10;
  bool stable = false;
  for (std::size_t round = 0; round <= verts && !stable; ++round) {
    stable = true;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t p = 0; p < cells; ++p) {
        const double c = cost[i * cells + p];
        if (pot[i] + c < pot[n + p] - eps) {
          pot[n + p] = pot[i] + c;
          stable = false;
        }
        if (flow[i * cells + p] > 0 && pot[n + p] - c < pot[i] - eps) {
          pot[i] = pot[n + p] - c;
          stable = false;
        }
      }
    }
  }
  if (!stable) throw Error("exact_oracle: optimality certificate failed");

  double total = 0.0;
  std::vector<std::int32_t> assignment(cells, 0);
  for (std::size_t p = 0; p < cells; ++p) {
    long most = -1;
    for (std::size_t i = 0; i < n; ++i) {
      const long f = flow[i * cells + p];
      total += static_cast<double>(f) * cost[i * cells + p];
      if (f > most) {
        most = f;
        assignment[p] = static_cast<std::int32_t>(i);
      }
    }
  }
  return {total * unit, std::move(assignment)};
}

}  // namespace matchlab
