#include "matchlab/experiments.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <string>
#include <tuple>

#include <boost/math/quadrature/gauss.hpp>

#include "matchlab/error.hpp"
#include "matchlab/rng.hpp"
#include "matchlab/spectral.hpp"

namespace matchlab {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

void require_replicas(std::size_t R, const char* what) {
  if (R < 2) throw InvalidArgument(std::string(what) + ": needs at least 2 replicas");
}

void require_n(std::size_t n, const char* what) {
  if (n == 0) throw InvalidArgument(std::string(what) + ": n must be >= 1");
}

EstimatorRecord make_record(std::string quantity, std::size_t n, double t, int m,
                            std::uint64_t seed, std::vector<double> values) {
  EstimatorRecord rec;
  rec.quantity = std::move(quantity);
  rec.n = n;
  rec.t = t;
  rec.m = m;
  rec.R = values.size();
  std::tie(rec.mean, rec.std_error) = mean_stderr(values);
  rec.seed = seed;
  rec.replicas = std::move(values);
  return rec;
}

// Record for c * E[V]^{power} from replica values V; stderr by the delta method.
EstimatorRecord power_record(std::string quantity, std::size_t n, double t, int m,
                             std::uint64_t seed, std::vector<double> values, double power,
                             double scale) {
  const auto [mv, sv] = mean_stderr(values);
  EstimatorRecord rec = make_record(std::move(quantity), n, t, m, seed, std::move(values));
  rec.mean = scale * std::pow(mv, power);
  rec.std_error = mv > 0.0 ? scale * power * std::pow(mv, power - 1.0) * sv : 0.0;
  return rec;
}

void stamp(EstimatorRecord& rec, const RunOptions& opts, Clock::time_point start) {
  if (opts.timing) rec.runtime_seconds = seconds_since(start);
}

SemidiscreteSolution solve_replica(const PointSample& sample, int m, const RunOptions& opts) {
  try {
    return solve(sample, m, opts.mass_tol, opts.max_iters);
  } catch (const ConvergenceError& e) {
    throw ConvergenceError(std::string(e.what()) + " [seed " + std::to_string(sample.seed) +
                               ", replica " + std::to_string(sample.replica_index) + "]",
                           e.residuals());
  }
}

int grid_or_default(int m, std::size_t n) { return m > 0 ? m : default_grid(n); }

const TorusPoint kOrigin = TorusPoint::wrap(0.0, 0.0);

// Thresholds given as formulas accept values one rounding below them.
constexpr double kSlack = 1.0 - 1e-12;

double sq(Vec2 v) { return v.x1 * v.x1 + v.x2 * v.x2; }

}  // namespace

double EstimatorRecord::extra(const std::string& name) const {
  for (const auto& [key, value] : extras) {
    if (key == name) return value;
  }
  throw InvalidArgument("EstimatorRecord: no extra named " + name);
}

std::pair<double, double> mean_stderr(const std::vector<double>& values) {
  if (values.empty()) throw InvalidArgument("mean_stderr: no values");
  const double R = static_cast<double>(values.size());
  const double mean = std::accumulate(values.begin(), values.end(), 0.0) / R;
  if (values.size() < 2) return {mean, 0.0};
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  return {mean, std::sqrt(ss / (R - 1.0)) / std::sqrt(R)};
}

PointSample replica_sample(std::size_t n, std::uint64_t seed, std::size_t replica) {
  return sample_uniform(n, derive_seed(seed, n), replica);
}

TransportStudy transport_study(std::size_t n, int m, std::size_t R, std::uint64_t seed,
                               const std::vector<double>& times, const RunOptions& opts) {
  require_n(n, "transport_study");
  const auto start = Clock::now();
  TransportStudy study;
  study.n = n;
  study.m = grid_or_default(m, n);
  study.seed = seed;
  study.times = times;
  const double nd = static_cast<double>(n);
  for (std::size_t r = 0; r < R; ++r) {
    const PointSample sample = replica_sample(n, seed, r);
    const SemidiscreteSolution sol = solve_replica(sample, study.m, opts);
    ReplicaTransport rt;
    rt.n_cost = nd * sol.cost;
    if (!times.empty()) rt.at = transport_integrals(sol, times, opts.kernel);
    study.replicas.push_back(std::move(rt));
  }
  study.seconds = seconds_since(start);
  return study;
}

EstimatorRecord study_record(const TransportStudy& study, const std::string& quantity,
                             std::size_t time_index, const RunOptions& opts) {
  const double nd = static_cast<double>(study.n);
  std::vector<double> values;
  double t = 0.0;
  if (quantity == "cost") {
    for (const auto& r : study.replicas) values.push_back(r.n_cost);
  } else {
    if (time_index >= study.times.size()) throw InvalidArgument("study_record: no such time");
    t = study.times[time_index];
    for (const auto& r : study.replicas) {
      const TransportIntegrals& ti = r.at[time_index];
      if (quantity == "displacement_at_x") {
        values.push_back(nd * ti.map_poisson_err);
      } else if (quantity == "displacement_at_y") {
        values.push_back(nd * ti.nmap_err);
      } else if (quantity == "quasi_orth") {
        values.push_back(nd * ti.quasi_orth);
      } else {
        throw InvalidArgument("study_record: unknown quantity " + quantity);
      }
    }
  }
  auto rec = make_record(quantity, study.n, t, study.m, study.seed, std::move(values));
  if (opts.timing) rec.runtime_seconds = study.seconds;
  return rec;
}

EstimatorRecord estimate_cost(std::size_t n, int m, std::size_t R, std::uint64_t seed,
                              const RunOptions& opts) {
  require_replicas(R, "estimate_cost");
  return study_record(transport_study(n, m, R, seed, {}, opts), "cost", 0, opts);
}

EstimatorRecord estimate_cost_second_moment(std::size_t n, int m, std::size_t R,
                                            std::uint64_t seed, const RunOptions& opts) {
  require_replicas(R, "estimate_cost_second_moment");
  const auto start = Clock::now();
  const auto study = transport_study(n, m, R, seed, {}, opts);
  std::vector<double> squares;
  for (const auto& r : study.replicas) squares.push_back(r.n_cost * r.n_cost);
  auto rec = power_record("cost_second_moment", n, 0.0, study.m, seed, std::move(squares), 0.5, 1.0);
  stamp(rec, opts, start);
  return rec;
}

EstimatorRecord estimate_displacement(std::size_t n, double t, int m, std::size_t R,
                                      std::uint64_t seed, DisplacementVariant variant,
                                      const RunOptions& opts) {
  require_n(n, "estimate_displacement");
  require_replicas(R, "estimate_displacement");
  const ScaleParams sp = ScaleParams::of(n);
  if (variant == DisplacementVariant::AtX && !(t >= kSlack / static_cast<double>(n))) {
    throw InvalidArgument("estimate_displacement(at_x): requires t >= r_n^2 = 1/n");
  }
  if (variant == DisplacementVariant::AtY && !(t >= kSlack * sp.t_n)) {
    throw InvalidArgument("estimate_displacement(at_y): requires t >= t_n = (ln n)^3 / n");
  }
  const auto study = transport_study(n, m, R, seed, {t}, opts);
  return study_record(study,
                      variant == DisplacementVariant::AtX ? "displacement_at_x" : "displacement_at_y",
                      0, opts);
}

EstimatorRecord estimate_quasi_orthogonality(std::size_t n, int m, std::size_t R,
                                             std::uint64_t seed, const RunOptions& opts) {
  require_n(n, "estimate_quasi_orthogonality");
  require_replicas(R, "estimate_quasi_orthogonality");
  const double t = ScaleParams::of(n).t_n;
  if (!(t > 0.0)) throw InvalidArgument("estimate_quasi_orthogonality: t_n = 0 for n = 1");
  return study_record(transport_study(n, m, R, seed, {t}, opts), "quasi_orth", 0, opts);
}

EstimatorRecord estimate_trace_formula(std::size_t n, double t, std::size_t R, std::uint64_t seed,
                                       const RunOptions& opts) {
  require_n(n, "estimate_trace_formula");
  require_replicas(R, "estimate_trace_formula");
  if (!(t > 0.0)) throw DomainError("estimate_trace_formula: requires t > 0");
  const auto start = Clock::now();
  const double nd = static_cast<double>(n);
  std::vector<double> values;
  for (std::size_t r = 0; r < R; ++r) {
    const PointSample sample = replica_sample(n, seed, r);
    const spectral::SpectralField field(sample.points, t, opts.kernel);
    values.push_back(nd * field.dirichlet());
  }
  auto rec = make_record("trace_formula", n, t, 0, seed, std::move(values));
  rec.extras.emplace_back("reference", q_zero_at_origin(HeatTime(2.0 * t), opts.kernel));
  stamp(rec, opts, start);
  return rec;
}

EstimatorRecord estimate_hessian_moment(std::size_t n, std::size_t R, std::uint64_t seed,
                                        int grid_m, const RunOptions& opts) {
  require_n(n, "estimate_hessian_moment");
  require_replicas(R, "estimate_hessian_moment");
  const double t = ScaleParams::of(n).t_n;
  if (!(t > 0.0)) throw InvalidArgument("estimate_hessian_moment: requires n >= 2 (t_n > 0)");
  const int floor_m = static_cast<int>(std::ceil(4.0 / std::sqrt(t)));
  const int m = grid_m > 0 ? grid_m : std::max(64, floor_m);
  const auto start = Clock::now();
  std::vector<double> fourth;
  const double thresholds[] = {0.1, 0.5, 1.0};
  std::size_t exceed[3] = {0, 0, 0};
  for (std::size_t r = 0; r < R; ++r) {
    const double h = hessian_sup(replica_sample(n, seed, r), HeatTime(t), m, opts.kernel);
    fourth.push_back(h * h * h * h);
    for (int k = 0; k < 3; ++k) exceed[k] += h > thresholds[k];
  }
  auto rec = power_record("hessian_moment", n, t, m, seed, std::move(fourth), 0.25, 1.0);
  rec.extras.emplace_back("exceed_0.1", static_cast<double>(exceed[0]) / static_cast<double>(R));
  rec.extras.emplace_back("exceed_0.5", static_cast<double>(exceed[1]) / static_cast<double>(R));
  rec.extras.emplace_back("exceed_1", static_cast<double>(exceed[2]) / static_cast<double>(R));
  stamp(rec, opts, start);
  return rec;
}

EstimatorRecord estimate_change_time(std::size_t n, double s, double t, std::size_t R,
                                     std::uint64_t seed, int grid_m, const RunOptions& opts) {
  require_n(n, "estimate_change_time");
  require_replicas(R, "estimate_change_time");
  const double nd = static_cast<double>(n);
  if (!(s >= 1.0 / nd && s <= t && t < 1.0)) {
    throw InvalidArgument("estimate_change_time: requires 1/n <= s <= t < 1");
  }
  const int m = grid_m > 0 ? grid_m : static_cast<int>(std::ceil(8.0 / std::sqrt(s)));
  const auto start = Clock::now();
  std::vector<double> values;
  for (std::size_t r = 0; r < R; ++r) {
    const PointSample sample = replica_sample(n, seed, r);
    const auto gs = spectral::SpectralField(sample.points, s, opts.kernel).grid(m);
    const auto gt = spectral::SpectralField(sample.points, t, opts.kernel).grid(m);
    double total = 0.0;
    for (int i = 0; i < m; ++i) {
      double row = 0.0;
      for (int j = 0; j < m; ++j) {
        const std::size_t p = gs.index(i, j);
        const double d = sq({gs.g1[p] - gt.g1[p], gs.g2[p] - gt.g2[p]});
        row += d * d;
      }
      total += row;
    }
    values.push_back(total / (static_cast<double>(m) * m));
  }
  auto rec = power_record("change_time", n, t, m, seed, std::move(values), 0.5, nd);
  rec.extras.emplace_back("s", s);
  stamp(rec, opts, start);
  return rec;
}

EstimatorRecord estimate_local_consistency(std::size_t n, double t, std::size_t R,
                                           std::uint64_t seed, const RunOptions& opts) {
  require_n(n, "estimate_local_consistency");
  require_replicas(R, "estimate_local_consistency");
  const double nd = static_cast<double>(n);
  if (!(t >= 1.0 / nd)) throw InvalidArgument("estimate_local_consistency: requires t >= 1/n");
  const double r = ScaleParams::of(n).r_n;
  const HeatTime ht(t);
  const auto start = Clock::now();
  std::vector<double> values, counts;
  for (std::size_t k = 0; k < R; ++k) {
    const PointSample sample = replica_sample(n, seed, k);
    double sum = 0.0;
    std::size_t inside = 0;
    std::optional<Vec2> g0;
    for (const auto& x : sample.points) {
      if (!in_ball(x, kOrigin, r)) continue;
      if (!g0) g0 = grad_f(sample, ht, kOrigin, opts.kernel);
      const Vec2 gx = grad_f(sample, ht, x, opts.kernel);
      sum += sq({g0->x1 - gx.x1, g0->x2 - gx.x2});
      ++inside;
    }
    values.push_back(nd * sum / special::kPi);
    counts.push_back(static_cast<double>(inside));
  }
  auto rec = make_record("local_consistency", n, t, 0, seed, std::move(values));
  rec.extras.emplace_back("ball_count_mean", mean_stderr(counts).first);
  rec.extras.emplace_back("ball_count_stderr", mean_stderr(counts).second);
  stamp(rec, opts, start);
  return rec;
}

EstimatorRecord estimate_kernel_comparison(std::size_t n, double t, std::size_t R,
                                           std::uint64_t seed, const RunOptions& opts) {
  require_n(n, "estimate_kernel_comparison");
  require_replicas(R, "estimate_kernel_comparison");
  const double nd = static_cast<double>(n);
  if (!(t >= 1.0 / nd && t <= 1.0 / 16.0)) {
    throw InvalidArgument("estimate_kernel_comparison: requires 1/n <= t <= 1/16");
  }
  const auto start = Clock::now();
  std::vector<double> values;
  for (std::size_t k = 0; k < R; ++k) {
    const PointSample sample = replica_sample(n, seed, k);
    const Vec2 a = grad_f(sample, HeatTime(t), kOrigin, opts.kernel);
    const Vec2 b = mollified_field_gradient(sample, std::sqrt(t), kOrigin, opts.kernel);
    const double d = sq({a.x1 - b.x1, a.x2 - b.x2});
    values.push_back(d * d);
  }
  auto rec = power_record("kernel_comparison", n, t, 0, seed, std::move(values), 0.5, nd);
  stamp(rec, opts, start);
  return rec;
}

EstimatorRecord estimate_path_integral(std::size_t n, double t, int m, std::size_t R,
                                       std::uint64_t seed, const RunOptions& opts) {
  require_n(n, "estimate_path_integral");
  require_replicas(R, "estimate_path_integral");
  if (!(t > 0.0)) throw DomainError("estimate_path_integral: requires t > 0");
  using Rule = boost::math::quadrature::gauss<double, 8>;
  // Nodes and weights of the 8-point rule mapped to [0, 1].
  std::vector<double> node, weight;
  for (std::size_t k = 0; k < Rule::abscissa().size(); ++k) {
    const double x = Rule::abscissa()[k], w = Rule::weights()[k];
    node.push_back(0.5 * (1.0 + x));
    weight.push_back(0.25 * w);
    node.push_back(0.5 * (1.0 - x));
    weight.push_back(0.25 * w);
  }
  const int grid = grid_or_default(m, n);
  const double nd = static_cast<double>(n);
  const auto start = Clock::now();
  std::vector<double> values;
  for (std::size_t r = 0; r < R; ++r) {
    const PointSample sample = replica_sample(n, seed, r);
    const SemidiscreteSolution sol = solve_replica(sample, grid, opts);
    const spectral::SpectralField field(sample.points, t, opts.kernel);
    std::vector<double> rows(static_cast<std::size_t>(grid));
#pragma omp parallel for schedule(static)
    for (int i = 0; i < grid; ++i) {
      double row = 0.0;
      for (int j = 0; j < grid; ++j) {
        const std::size_t p = static_cast<std::size_t>(i) * grid + j;
        const TorusPoint y = TorusPoint::wrap((i + 0.5) / grid, (j + 0.5) / grid);
        const auto a = static_cast<std::size_t>(sol.assignment[p]);
        const Vec2 d = nearest_image(sol.sites[a], y).vec();
        for (std::size_t k = 0; k < node.size(); ++k) {
          const Vec2 at{y.x1() + node[k] * d.x1, y.x2() + node[k] * d.x2};
          row += weight[k] * sq(field.at(at).grad);
        }
      }
      rows[static_cast<std::size_t>(i)] = row;
    }
    double total = 0.0;
    for (double v : rows) total += v;
    values.push_back(nd * total / (static_cast<double>(grid) * grid));
  }
  auto rec = make_record("path_integral", n, t, grid, seed, std::move(values));
  stamp(rec, opts, start);
  return rec;
}

RateFit fit_line(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) throw InvalidArgument("fit_line: size mismatch");
  if (x.size() < 3) throw InvalidArgument("fit_line: needs at least 3 points");
  std::vector<double> sorted = x;
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
    throw InvalidArgument("fit_line: regressor values must be distinct");
  }
  const double k = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / k;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / k;
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  RateFit fit;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  for (std::size_t i = 0; i < x.size(); ++i) fit.residuals.push_back(y[i] - fit.intercept - fit.slope * x[i]);
  return fit;
}

RateFit fit_rate(const std::vector<EstimatorRecord>& records, Regressor regressor) {
  std::vector<double> x, y;
  for (const auto& r : records) {
    const double nd = static_cast<double>(r.n);
    switch (regressor) {
      case Regressor::LogN:
        x.push_back(std::log(nd));
        break;
      case Regressor::LogInvT:
        if (!(r.t > 0.0)) throw InvalidArgument("fit_rate: record without a positive t");
        x.push_back(std::log(1.0 / r.t));
        break;
      case Regressor::LogLogN:
        if (!(r.n > 1)) throw InvalidArgument("fit_rate: ln ln n needs n >= 2");
        x.push_back(std::log(std::log(nd)));
        break;
    }
    y.push_back(r.mean);
  }
  return fit_line(x, y);
}

const std::vector<std::string>& known_quantities() {
  static const std::vector<std::string> names = {
      "cost",          "cost_second_moment", "displacement_at_x", "displacement_at_y",
      "quasi_orth",    "trace_formula",      "hessian_moment",    "change_time",
      "local_consistency", "kernel_comparison", "path_integral"};
  return names;
}

double ExperimentConfig::time_for(std::size_t n) const {
  const ScaleParams sp = ScaleParams::of(n);
  switch (t_rule) {
    case TRule::Fixed:
      return t_param;
    case TRule::Tn:
      return sp.t_n;
    case TRule::RnSquared:
      return 1.0 / static_cast<double>(n);
    case TRule::ScaledTn:
      return t_param * sp.t_n;
  }
  return sp.t_n;
}

void ExperimentConfig::validate() const {
  const auto& names = known_quantities();
  if (std::find(names.begin(), names.end(), quantity) == names.end()) {
    throw InvalidArgument("experiment: unknown quantity '" + quantity + "'");
  }
  if (replicas < 2) throw InvalidArgument("experiment: replicas must be >= 2");
  if (n_list.empty()) throw InvalidArgument("experiment: n_list is empty");
  for (std::size_t i = 0; i < n_list.size(); ++i) {
    if (n_list[i] == 0) throw InvalidArgument("experiment: n must be >= 1");
    if (i > 0 && n_list[i] <= n_list[i - 1]) {
      throw InvalidArgument("experiment: n_list must be strictly increasing");
    }
  }
  if (grid_m < 0) throw InvalidArgument("experiment: grid_m must be >= 0");
  const bool uses_t = quantity != "cost" && quantity != "cost_second_moment";
  if (uses_t) {
    for (std::size_t n : n_list) {
      const double t = time_for(n);
      if (!(t >= 1.0 / static_cast<double>(n))) {
        throw InvalidArgument("experiment: t = " + std::to_string(t) + " is below 1/n for n = " +
                              std::to_string(n));
      }
    }
  }
  options.kernel.validate();
}

std::vector<EstimatorRecord> run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  std::vector<EstimatorRecord> out;
  const auto& o = cfg.options;
  for (std::size_t n : cfg.n_list) {
    const double t = cfg.time_for(n);
    const std::string& q = cfg.quantity;
    const std::size_t R = cfg.replicas;
    if (q == "cost") {
      out.push_back(estimate_cost(n, cfg.grid_m, R, cfg.seed, o));
    } else if (q == "cost_second_moment") {
      out.push_back(estimate_cost_second_moment(n, cfg.grid_m, R, cfg.seed, o));
    } else if (q == "displacement_at_x") {
      out.push_back(estimate_displacement(n, t, cfg.grid_m, R, cfg.seed, DisplacementVariant::AtX, o));
    } else if (q == "displacement_at_y") {
      out.push_back(estimate_displacement(n, t, cfg.grid_m, R, cfg.seed, DisplacementVariant::AtY, o));
    } else if (q == "quasi_orth") {
      out.push_back(estimate_quasi_orthogonality(n, cfg.grid_m, R, cfg.seed, o));
    } else if (q == "trace_formula") {
      out.push_back(estimate_trace_formula(n, t, R, cfg.seed, o));
    } else if (q == "hessian_moment") {
      out.push_back(estimate_hessian_moment(n, R, cfg.seed, cfg.grid_m, o));
    } else if (q == "change_time") {
      out.push_back(estimate_change_time(n, t, std::min(t * cfg.t_ratio, 0.999), R, cfg.seed,
                                         cfg.grid_m, o));
    } else if (q == "local_consistency") {
      out.push_back(estimate_local_consistency(n, t, R, cfg.seed, o));
    } else if (q == "kernel_comparison") {
      out.push_back(estimate_kernel_comparison(n, t, R, cfg.seed, o));
    } else {
      out.push_back(estimate_path_integral(n, t, cfg.grid_m, R, cfg.seed, o));
    }
  }
  return out;
}

}  // namespace matchlab
