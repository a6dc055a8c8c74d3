#include <cmath>
#include <sstream>
#include <string>

#include "doctest.h"
#include "matchlab/error.hpp"
#include "matchlab/experiments.hpp"
#include "matchlab/parallel.hpp"
#include "matchlab/report.hpp"
#include "matchlab/rng.hpp"

using namespace matchlab;

TEST_CASE("line fit and summary statistics") {
  const std::vector<double> x{1, 2, 3, 4}, y{3, 5, 7, 9};
  const RateFit f = fit_line(x, y);
  CHECK(f.slope == doctest::Approx(2.0).epsilon(1e-14));
  CHECK(f.intercept == doctest::Approx(1.0).epsilon(1e-14));
  for (double r : f.residuals) CHECK(std::abs(r) <= 1e-13);
  CHECK_THROWS_AS(fit_line({1, 2}, {1, 2}), InvalidArgument);
  CHECK_THROWS_AS(fit_line({1, 1, 2}, {1, 2, 3}), InvalidArgument);
  CHECK_THROWS_AS(fit_line({1, 2, 3}, {1, 2}), InvalidArgument);

  const auto [mean, se] = mean_stderr({1, 2, 3, 4});
  CHECK(mean == 2.5);
  CHECK(se == doctest::Approx(std::sqrt(5.0 / 3.0) / 2.0));
  CHECK_THROWS_AS(mean_stderr({}), InvalidArgument);

  std::vector<EstimatorRecord> recs;
  for (std::size_t n : {16, 64, 256}) {
    EstimatorRecord r;
    r.n = n;
    r.mean = 0.5 * std::log(static_cast<double>(n)) + 2.0;
    recs.push_back(r);
  }
  CHECK(fit_rate(recs, Regressor::LogN).slope == doctest::Approx(0.5));
  CHECK_THROWS_AS(fit_rate({recs[0], recs[1]}, Regressor::LogN), InvalidArgument);
}

TEST_CASE("replica samples are stream-separated by n") {
  const PointSample a = replica_sample(64, 1, 0), b = replica_sample(128, 1, 0);
  CHECK(a.seed == derive_seed(1, 64));
  CHECK(a.points[0] != b.points[0]);
  CHECK(replica_sample(64, 1, 3).points == replica_sample(64, 1, 3).points);
}

TEST_CASE("cost estimator averages n times the solved cost") {
  const RunOptions opts;
  const EstimatorRecord rec = estimate_cost(16, 64, 4, 5, opts);
  std::vector<double> manual;
  for (std::size_t r = 0; r < 4; ++r) manual.push_back(16.0 * solve(replica_sample(16, 5, r), 64).cost);
  CHECK(rec.replicas == manual);
  CHECK(rec.mean == doctest::Approx(mean_stderr(manual).first).epsilon(1e-15));
  CHECK(rec.R == 4);
  CHECK(rec.m == 64);
  CHECK_FALSE(rec.runtime_seconds.has_value());

  const EstimatorRecord second = estimate_cost_second_moment(16, 64, 4, 5, opts);
  std::vector<double> sq;
  for (double v : manual) sq.push_back(v * v);
  const auto [m2, s2] = mean_stderr(sq);
  CHECK(second.mean == doctest::Approx(std::sqrt(m2)).epsilon(1e-14));
  CHECK(second.std_error == doctest::Approx(0.5 * s2 / std::sqrt(m2)).epsilon(1e-12));
  CHECK(second.mean >= rec.mean);
  CHECK_THROWS_AS(estimate_cost(16, 64, 1, 5, opts), InvalidArgument);

  RunOptions timed;
  timed.timing = true;
  CHECK(estimate_cost(4, 16, 2, 5, timed).runtime_seconds.has_value());
}

TEST_CASE("transport study records") {
  const std::size_t n = 64;
  const ScaleParams sp = ScaleParams::of(n);
  const RunOptions opts;
  const TransportStudy st = transport_study(n, 0, 3, 9, {sp.t_n, 1.0 / n}, opts);
  CHECK(st.m == default_grid(n));
  REQUIRE(st.replicas.size() == 3);
  const EstimatorRecord y = study_record(st, "displacement_at_y", 0, opts);
  const EstimatorRecord x = study_record(st, "displacement_at_x", 1, opts);
  const EstimatorRecord q = study_record(st, "quasi_orth", 0, opts);
  CHECK(y.t == sp.t_n);
  CHECK(x.t == 1.0 / n);
  CHECK(y.replicas[1] == doctest::Approx(n * st.replicas[1].at[0].nmap_err).epsilon(1e-15));
  CHECK(q.replicas[2] == doctest::Approx(n * st.replicas[2].at[0].quasi_orth).epsilon(1e-15));
  CHECK_THROWS_AS(study_record(st, "quasi_orth", 2, opts), InvalidArgument);
  CHECK_THROWS_AS(study_record(st, "nonsense", 0, opts), InvalidArgument);

  const EstimatorRecord direct = estimate_displacement(n, sp.t_n, 0, 3, 9, DisplacementVariant::AtY, opts);
  CHECK(direct.replicas == y.replicas);
  CHECK(estimate_quasi_orthogonality(n, 0, 3, 9, opts).replicas == q.replicas);
  CHECK_THROWS_AS(estimate_displacement(n, 0.5 / n, 0, 3, 9, DisplacementVariant::AtX, opts),
                  InvalidArgument);
  CHECK_THROWS_AS(estimate_displacement(n, 0.5 * sp.t_n, 0, 3, 9, DisplacementVariant::AtY, opts),
                  InvalidArgument);
  CHECK_NOTHROW(estimate_displacement(n, sp.r_n * sp.r_n, 16, 2, 9, DisplacementVariant::AtX, opts));
}

TEST_CASE("records do not depend on the worker count") {
  const RunOptions opts;
  parallel::set_threads(1);
  const auto a = estimate_cost(32, 64, 3, 11, opts);
  const auto ta = estimate_trace_formula(100, 0.01, 3, 11, opts);
  parallel::set_threads(4);
  const auto b = estimate_cost(32, 64, 3, 11, opts);
  const auto tb = estimate_trace_formula(100, 0.01, 3, 11, opts);
  parallel::set_threads(0);
  CHECK(a.replicas == b.replicas);
  CHECK(ta.replicas == tb.replicas);
  std::ostringstream sa, sb;
  report::write_csv_row(sa, a);
  report::write_csv_row(sb, b);
  CHECK(sa.str() == sb.str());
}

TEST_CASE("scalar estimators") {
  const RunOptions opts;
  const auto tr = estimate_trace_formula(64, 0.01, 40, 2, opts);
  CHECK(tr.extra("reference") == doctest::Approx(q_zero_at_origin(HeatTime(0.02), opts.kernel)));
  CHECK(std::abs(tr.mean - tr.extra("reference")) <= 4.0 * tr.std_error);
  CHECK_THROWS_AS(tr.extra("missing"), InvalidArgument);

  const auto h = estimate_hessian_moment(256, 4, 2, 0, opts);
  CHECK(h.mean > 0.0);
  CHECK(h.extra("exceed_0.1") >= h.extra("exceed_0.5"));
  CHECK(h.extra("exceed_0.5") >= h.extra("exceed_1"));
  CHECK(h.t == ScaleParams::of(256).t_n);

  const auto c = estimate_change_time(256, 1.0 / 256, 4.0 / 256, 3, 2, 0, opts);
  CHECK(c.mean > 0.0);
  CHECK(c.extra("s") == 1.0 / 256);
  CHECK_THROWS_AS(estimate_change_time(256, 0.5 / 256, 4.0 / 256, 3, 2, 0, opts), InvalidArgument);
  CHECK_THROWS_AS(estimate_change_time(256, 4.0 / 256, 1.0 / 256, 3, 2, 0, opts), InvalidArgument);

  // n mu_n(B(0, r_n)) has mean n pi r_n^2 = pi.
  const auto l = estimate_local_consistency(256, 16.0 / 256, 200, 2, opts);
  CHECK(std::abs(l.extra("ball_count_mean") - special::kPi) <= 4.0 * l.extra("ball_count_stderr"));
  CHECK(l.mean >= 0.0);

  const auto k = estimate_kernel_comparison(256, 4.0 / 256, 5, 2, opts);
  CHECK(k.mean > 0.0);
  CHECK_THROWS_AS(estimate_kernel_comparison(256, 0.1, 5, 2, opts), InvalidArgument);

  const auto p = estimate_path_integral(16, 1.0 / 16, 64, 2, 2, opts);
  CHECK(p.mean > 0.0);
}

TEST_CASE("experiment configuration") {
  ExperimentConfig c;
  c.quantity = "cost";
  c.n_list = {4, 16};
  c.replicas = 2;
  c.grid_m = 16;
  CHECK_NOTHROW(c.validate());
  const auto recs = run_experiment(c);
  REQUIRE(recs.size() == 2);
  CHECK(recs[1].n == 16);

  ExperimentConfig bad = c;
  bad.quantity = "nope";
  CHECK_THROWS_AS(bad.validate(), InvalidArgument);
  bad = c;
  bad.replicas = 1;
  CHECK_THROWS_AS(bad.validate(), InvalidArgument);
  bad = c;
  bad.n_list = {16, 4};
  CHECK_THROWS_AS(bad.validate(), InvalidArgument);
  bad = c;
  bad.n_list = {};
  CHECK_THROWS_AS(bad.validate(), InvalidArgument);
  bad = c;
  bad.quantity = "trace_formula";
  bad.t_rule = TRule::Fixed;
  bad.t_param = 0.01;
  CHECK_THROWS_AS(bad.validate(), InvalidArgument);  // t below 1/n for n = 4
  bad.n_list = {128, 256};
  CHECK_NOTHROW(bad.validate());

  ExperimentConfig r2;
  r2.quantity = "displacement_at_x";
  r2.t_rule = TRule::RnSquared;
  r2.n_list = {100};
  CHECK(r2.time_for(100) == 0.01);
  CHECK_NOTHROW(r2.validate());
}
