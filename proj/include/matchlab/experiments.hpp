#pragma once

// Monte Carlo estimators over independent replicas. Replica r of size n uses
// the sample stream (derive_seed(seed, n), r), so no two sizes share points.
// Replicas run in index order and every reduction is order-fixed, which makes
// records bitwise reproducible for any worker count.

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "matchlab/field.hpp"
#include "matchlab/kernels.hpp"
#include "matchlab/semidiscrete.hpp"

namespace matchlab {

enum class TRule { Fixed, Tn, RnSquared, ScaledTn };

struct EstimatorRecord {
  std::string quantity;
  std::size_t n = 0;
  double t = 0.0;
  int m = 0;
  std::size_t R = 0;
  double mean = 0.0;
  double std_error = 0.0;
  std::uint64_t seed = 0;
  /// Wall time, only when timing was requested.
  std::optional<double> runtime_seconds;
  /// Per-replica values of the averaged quantity.
  std::vector<double> replicas;
  /// Named side results (reference values, exceedance frequencies, ...).
  std::vector<std::pair<std::string, double>> extras;

  double extra(const std::string& name) const;
};

/// Options shared by all estimators.
struct RunOptions {
  KernelConfig kernel;
  double mass_tol = 1e-2;
  int max_iters = 500;
  bool timing = false;
};

struct ExperimentConfig {
  std::string quantity;
  std::vector<std::size_t> n_list;
  TRule t_rule = TRule::Tn;
  /// The fixed t, or the factor c of c * t_n.
  double t_param = 1.0;
  /// Ratio t/s for change_time (s from t_rule).
  double t_ratio = 4.0;
  /// 0 selects the per-quantity default.
  int grid_m = 0;
  std::size_t replicas = 32;
  std::uint64_t seed = 1;
  RunOptions options;

  /// Throws InvalidArgument: R < 2, n_list empty or not strictly increasing,
  /// a derived t below 1/n, or an unknown quantity.
  void validate() const;
  double time_for(std::size_t n) const;
};

/// Quantity names accepted by run_experiment.
const std::vector<std::string>& known_quantities();

/// One record per n in cfg.n_list.
std::vector<EstimatorRecord> run_experiment(const ExperimentConfig& cfg);

/// Sample of replica r for size n under a base seed.
PointSample replica_sample(std::size_t n, std::uint64_t seed, std::size_t replica);

/// n * cost of every replica together with the transport integrals at the
/// requested times; the solve is shared by all of them.
struct ReplicaTransport {
  double n_cost = 0.0;
  std::vector<TransportIntegrals> at;
};

struct TransportStudy {
  std::size_t n = 0;
  int m = 0;
  std::uint64_t seed = 0;
  std::vector<double> times;
  std::vector<ReplicaTransport> replicas;
  double seconds = 0.0;
};

/// ConvergenceError from any replica is rethrown naming (seed, replica).
TransportStudy transport_study(std::size_t n, int m, std::size_t R, std::uint64_t seed,
                               const std::vector<double>& times, const RunOptions& opts);

/// Records drawn from a study: n * (map_poisson_err | nmap_err | quasi_orth)
/// at times[k], and n * disp_sq_mean.
EstimatorRecord study_record(const TransportStudy& study, const std::string& quantity,
                             std::size_t time_index, const RunOptions& opts);

EstimatorRecord estimate_cost(std::size_t n, int m, std::size_t R, std::uint64_t seed,
                              const RunOptions& opts = {});
/// n E[(W2^2)^2]^{1/2}; stderr by the delta method.
EstimatorRecord estimate_cost_second_moment(std::size_t n, int m, std::size_t R,
                                            std::uint64_t seed, const RunOptions& opts = {});

enum class DisplacementVariant { AtX, AtY };

/// AtX: n * map_poisson_err, requires t >= r_n^2. AtY: n * nmap_err,
/// requires t >= t_n.
EstimatorRecord estimate_displacement(std::size_t n, double t, int m, std::size_t R,
                                      std::uint64_t seed, DisplacementVariant variant,
                                      const RunOptions& opts = {});
/// n * quasi_orth at t = t_n.
EstimatorRecord estimate_quasi_orthogonality(std::size_t n, int m, std::size_t R,
                                             std::uint64_t seed, const RunOptions& opts = {});

/// Mean of n * dirichlet_energy; extra "reference" holds q_{2t}(0).
EstimatorRecord estimate_trace_formula(std::size_t n, double t, std::size_t R, std::uint64_t seed,
                                       const RunOptions& opts = {});

/// E[||hess f_{n,t_n}||_inf^4]^{1/4} on a pixel grid (0: max(64, resolution
/// floor)); extras "exceed_0.1", "exceed_0.5", "exceed_1" are the fractions of
/// replicas whose sup exceeds the threshold.
EstimatorRecord estimate_hessian_moment(std::size_t n, std::size_t R, std::uint64_t seed,
                                        int grid_m = 0, const RunOptions& opts = {});

/// n * E[int |grad f_s - grad f_t|^4]^{1/2}, 1/n <= s <= t < 1 (0 grid:
/// smallest m >= 8/sqrt(s)).
EstimatorRecord estimate_change_time(std::size_t n, double s, double t, std::size_t R,
                                     std::uint64_t seed, int grid_m = 0,
                                     const RunOptions& opts = {});

/// Mean of sum_{X_i in B(0, r_n)} |grad f(0) - grad f(X_i)|^2 * n / pi;
/// extra "ball_count_mean" is the mean of n mu_n(B(0, r_n)).
EstimatorRecord estimate_local_consistency(std::size_t n, double t, std::size_t R,
                                           std::uint64_t seed, const RunOptions& opts = {});

/// n * E[|grad f_t(0) - grad phi^{sqrt t}(0)|^4]^{1/2}, 1/n <= t <= 1/16.
EstimatorRecord estimate_kernel_comparison(std::size_t n, double t, std::size_t R,
                                           std::uint64_t seed, const RunOptions& opts = {});

/// n * E[int int_0^1 |grad f(y + s (T(y) - y))|^2 ds dy] by 8-point
/// Gauss-Legendre along each pixel's segment. Reported only.
EstimatorRecord estimate_path_integral(std::size_t n, double t, int m, std::size_t R,
                                       std::uint64_t seed, const RunOptions& opts = {});

enum class Regressor { LogN, LogInvT, LogLogN };

struct RateFit {
  double slope = 0.0;
  double intercept = 0.0;
  std::vector<double> residuals;
};

/// Least squares of record means on the regressor. InvalidArgument for fewer
/// than 3 records or repeated regressor values.
RateFit fit_rate(const std::vector<EstimatorRecord>& records, Regressor regressor);
RateFit fit_line(const std::vector<double>& x, const std::vector<double>& y);

/// Mean and standard error (sample sd / sqrt(R)) of replica values.
std::pair<double, double> mean_stderr(const std::vector<double>& values);

}  // namespace matchlab
