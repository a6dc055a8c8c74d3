#include "matchlab/cli.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <memory>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "matchlab/config.hpp"
#include "matchlab/error.hpp"
#include "matchlab/experiments.hpp"
#include "matchlab/kernels.hpp"
#include "matchlab/parallel.hpp"
#include "matchlab/report.hpp"
#include "matchlab/rng.hpp"
#include "matchlab/spectral.hpp"

namespace matchlab::cli {

namespace {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

const std::vector<std::string> kKeys = {
    "seed",   "replicas", "scalar_replicas", "n_list",  "grid_m",   "threads", "out",
    "keep_replicas", "timing", "mass_tol", "max_iters", "target_accuracy"};

// Resolved settings. Unset optionals fall back to per-subcommand defaults.
struct Settings {
  std::uint64_t seed = 1;
  std::optional<std::size_t> replicas;
  std::optional<std::size_t> scalar_replicas;
  std::optional<std::vector<std::size_t>> n_list;
  int grid_m = 0;
  int threads = 0;
  std::string out = "matchlab-out";
  bool keep_replicas = false;
  RunOptions options;
};

Settings resolve(const config::KeyValues& kv) {
  using namespace config;
  Settings s;
  if (auto v = kv.get("seed")) s.seed = to_u64("seed", *v);
  if (auto v = kv.get("replicas")) s.replicas = to_u64("replicas", *v);
  if (auto v = kv.get("scalar_replicas")) s.scalar_replicas = to_u64("scalar_replicas", *v);
  if (auto v = kv.get("n_list")) {
    s.n_list = to_size_list("n_list", *v);
    if (std::adjacent_find(s.n_list->begin(), s.n_list->end(), std::greater_equal<>()) !=
        s.n_list->end()) {
      throw ConfigError("config key 'n_list': sizes must be strictly increasing");
    }
  }
  if (auto v = kv.get("grid_m")) s.grid_m = to_int("grid_m", *v);
  if (auto v = kv.get("threads")) s.threads = to_int("threads", *v);
  if (auto v = kv.get("out")) s.out = *v;
  if (auto v = kv.get("keep_replicas")) s.keep_replicas = to_bool("keep_replicas", *v);
  if (auto v = kv.get("timing")) s.options.timing = to_bool("timing", *v);
  if (auto v = kv.get("mass_tol")) s.options.mass_tol = to_real("mass_tol", *v);
  if (auto v = kv.get("max_iters")) s.options.max_iters = to_int("max_iters", *v);
  if (auto v = kv.get("target_accuracy")) s.options.kernel.target_accuracy = to_real("target_accuracy", *v);
  if (s.grid_m < 0) throw ConfigError("config key 'grid_m': must be >= 0");
  if (s.threads < 0) throw ConfigError("config key 'threads': must be >= 0");
  if (s.replicas && *s.replicas < 2) throw ConfigError("config key 'replicas': must be >= 2");
  if (s.scalar_replicas && *s.scalar_replicas < 2) {
    throw ConfigError("config key 'scalar_replicas': must be >= 2");
  }
  try {
    s.options.kernel.validate();
  } catch (const InvalidArgument& e) {
    throw ConfigError(e.what());
  }
  return s;
}

std::string timestamp_utc(std::chrono::system_clock::time_point tp, const char* fmt) {
  const std::time_t tt = std::chrono::system_clock::to_time_t(tp);
  std::tm tm{};
  gmtime_r(&tt, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, fmt);
  return os.str();
}

double ratio_spread(const std::vector<double>& v) {
  const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
  if (!(*lo > 0.0)) return std::numeric_limits<double>::infinity();
  return *hi / *lo;
}

// Output of one run: CSV + JSONL per quantity, written row by row.
class Session {
 public:
  Session(Settings settings, std::string config_path, std::string echo, std::ostream& out)
      : s_(std::move(settings)),
        config_path_(std::move(config_path)),
        echo_(std::move(echo)),
        out_(out),
        start_(std::chrono::system_clock::now()),
        stamp_(timestamp_utc(start_, "%Y%m%dT%H%M%SZ")) {
    fs::create_directories(s_.out);
  }

  const Settings& settings() const { return s_; }

  void emit(const EstimatorRecord& rec) {
    auto& f = file(rec.quantity, true);
    report::write_csv_row(*f.csv, rec);
    f.csv->flush();
    report::write_jsonl(*f.jsonl, rec, echo_, s_.keep_replicas);
    f.jsonl->flush();
    out_ << rec.quantity << " n=" << rec.n << " mean=" << report::format_real(rec.mean)
         << " stderr=" << report::format_real(rec.std_error) << '\n';
  }

  // A CSV with its own header for non-record tables.
  std::ostream& table(const std::string& name, const std::string& header) {
    auto& f = file(name, false);
    if (f.rows == 0) *f.csv << header << '\n';
    ++f.rows;
    return *f.csv;
  }

  void note(const std::string& subcommand, const std::string& check, bool pass, double value,
            double limit) {
    out_ << subcommand << ": " << check << " = " << report::format_real(value) << " (limit "
         << report::format_real(limit) << ") " << (pass ? "PASS" : "FAIL") << '\n';
    checks_.push_back({{"subcommand", subcommand},
                       {"check", check},
                       {"value", value},
                       {"limit", limit},
                       {"pass", pass}});
  }

  void status(const std::string& subcommand, int code) { status_[subcommand] = code; }

  // Shared solves: one study per n, with integrals at t_n and 1/n.
  const TransportStudy& study(std::size_t n, std::size_t R) {
    const auto key = std::make_pair(n, R);
    auto it = studies_.find(key);
    if (it != studies_.end()) return it->second;
    std::vector<double> times;
    if (n >= 3) times = {ScaleParams::of(n).t_n, 1.0 / static_cast<double>(n)};
    return studies_.emplace(key, transport_study(n, s_.grid_m, R, s_.seed, times, s_.options))
        .first->second;
  }

  void write_manifest() {
    for (auto& [name, f] : files_) {
      if (f.csv) f.csv->flush();
      if (f.jsonl) f.jsonl->flush();
    }
    ordered_json m;
    m["config_path"] = config_path_;
    m["config"] = ordered_json::parse(echo_);
    m["output_dir"] = s_.out;
    m["version"] = MATCHLAB_VERSION;
    m["start"] = timestamp_utc(start_, "%Y-%m-%dT%H:%M:%SZ");
    m["end"] = timestamp_utc(std::chrono::system_clock::now(), "%Y-%m-%dT%H:%M:%SZ");
    m["exit_status"] = ordered_json::object();
    for (const auto& [k, v] : status_) m["exit_status"][k] = v;
    m["files"] = ordered_json::array();
    for (const auto& [name, f] : files_) {
      m["files"].push_back(f.csv_path);
      if (!f.jsonl_path.empty()) m["files"].push_back(f.jsonl_path);
    }
    m["checks"] = checks_;
    std::ofstream(fs::path(s_.out) / "manifest.json") << m.dump(2) << '\n';
  }

 private:
  struct Files {
    std::unique_ptr<std::ofstream> csv, jsonl;
    std::string csv_path, jsonl_path;
    std::size_t rows = 0;
  };

  Files& file(const std::string& name, bool records) {
    auto it = files_.find(name);
    if (it != files_.end()) return it->second;
    Files f;
    const std::string base = name + "-" + stamp_ + "-" + std::to_string(s_.seed);
    f.csv_path = (fs::path(s_.out) / (base + ".csv")).string();
    f.csv = std::make_unique<std::ofstream>(f.csv_path);
    if (records) {
      report::write_csv_header(*f.csv);
      f.jsonl_path = (fs::path(s_.out) / (base + ".jsonl")).string();
      f.jsonl = std::make_unique<std::ofstream>(f.jsonl_path);
    }
    if (!*f.csv) throw ConfigError("cannot write to output directory " + s_.out);
    return files_.emplace(name, std::move(f)).first->second;
  }

  Settings s_;
  std::string config_path_, echo_;
  std::ostream& out_;
  std::chrono::system_clock::time_point start_;
  std::string stamp_;
  std::map<std::string, Files> files_;
  std::map<std::pair<std::size_t, std::size_t>, TransportStudy> studies_;
  std::map<std::string, int> status_;
  ordered_json checks_ = ordered_json::array();
};

std::vector<std::size_t> n_list_or(const Settings& s, std::vector<std::size_t> fallback) {
  return s.n_list ? *s.n_list : fallback;
}

std::size_t cost_R(const Settings& s) { return s.replicas.value_or(32); }
std::size_t scalar_R(const Settings& s) { return s.scalar_replicas.value_or(s.replicas.value_or(100)); }

const std::vector<std::size_t> kCostGrid = {64, 128, 256, 512, 1024, 2048, 4096};
const std::vector<std::size_t> kDisplacementGrid = {256, 1024, 4096};

// Each subcommand returns true when its checks pass.

bool kernel_selfcheck(Session& ss) {
  const auto& cfg = ss.settings().options.kernel;
  const Philox4x32 gen(derive_seed(ss.settings().seed, 0x5e1f));
  std::uint32_t counter = 0;
  auto uniform = [&]() { return gen.uniform_pair({counter++, 0, 0, 0}); };
  auto& tab = ss.table("kernel-selfcheck", "check,value,tolerance,pass");
  bool all = true;
  auto record = [&](const std::string& name, double value, double tol) {
    const bool pass = value <= tol;
    all = all && pass;
    tab << name << ',' << report::format_real(value) << ',' << report::format_real(tol) << ','
        << (pass ? "true" : "false") << '\n';
    ss.note("kernel-selfcheck", name, pass, value, tol);
  };

  double worst = 0.0;
  for (int k = 0; k < 100; ++k) {
    const auto a = uniform(), b = uniform();
    const HeatTime t(std::pow(10.0, -4.0 + 4.0 * a[0]));
    const Vec2 x{b[0], b[1]};
    worst = std::max(worst, std::abs(heat_kernel_fourier(t, x, cfg) - heat_kernel_images(t, x, cfg)));
  }
  record("heat_fourier_vs_images", worst, 1e-10);

  double fd = 0.0, trace = 0.0;
  for (int k = 0; k < 50; ++k) {
    const auto a = uniform(), b = uniform();
    const HeatTime t(std::pow(10.0, -3.0 + 3.0 * a[0]));
    const Vec2 x{b[0] - 0.5, b[1] - 0.5};
    const double h = 1e-5;
    const Vec2 g = grad_q(t, x, cfg);
    const double d1 = (q_kernel(t, {x.x1 + h, x.x2}, cfg) - q_kernel(t, {x.x1 - h, x.x2}, cfg)) / (2 * h);
    const double d2 = (q_kernel(t, {x.x1, x.x2 + h}, cfg) - q_kernel(t, {x.x1, x.x2 - h}, cfg)) / (2 * h);
    fd = std::max(fd, std::max(std::abs(g.x1 - d1), std::abs(g.x2 - d2)));
    const Sym2 H = hess_q(t, x, cfg);
    trace = std::max(trace, std::abs(H.xx + H.yy + heat_kernel(t, x, cfg) - 1.0));
  }
  record("grad_q_vs_finite_difference", fd, 1e-6);
  record("trace_hess_q_plus_p_minus_1", trace, 1e-8);

  double qf = 0.0;
  for (int k = 0; k < 20; ++k) {
    const auto a = uniform(), b = uniform();
    const HeatTime t(std::pow(10.0, -2.0 + 2.0 * a[0]));
    const Vec2 x{b[0], b[1]};
    qf = std::max(qf, std::abs(q_kernel(t, x, cfg) - q_kernel_fourier(t, x, cfg)));
  }
  record("q_split_vs_fourier", qf, 1e-9);

  double moll = 0.0;
  for (int k = 0; k < 10; ++k) {
    const auto a = uniform(), b = uniform();
    const double r = 0.05 + 0.2 * a[0];
    const Vec2 z{0.5 * b[0] - 0.25, 0.5 * b[1] - 0.25};
    const Vec2 c = mollified_green_gradient(r, z, cfg);
    const Vec2 q = mollified_green_gradient_quadrature(r, z, cfg);
    moll = std::max(moll, std::max(std::abs(c.x1 - q.x1), std::abs(c.x2 - q.x2)));
  }
  record("mollified_closed_form_vs_quadrature", moll, 1e-8);

  const PointSample sample = sample_uniform(32, ss.settings().seed, 0);
  const HeatTime ts(0.01);
  const spectral::SpectralField field(sample.points, ts.value(), cfg);
  double spectral_gap = 0.0;
  for (int k = 0; k < 20; ++k) {
    const auto a = uniform();
    const TorusPoint y = TorusPoint::wrap(a[0], a[1]);
    const Vec2 d = grad_f(sample, ts, y, cfg);
    const Vec2 s = field.at(y.vec()).grad;
    spectral_gap = std::max(spectral_gap, std::max(std::abs(d.x1 - s.x1), std::abs(d.x2 - s.x2)));
  }
  record("field_spectral_vs_direct", spectral_gap, 1e-9);
  return all;
}

bool trace_check(Session& ss) {
  const auto& cfg = ss.settings().options.kernel;
  auto& tab = ss.table("trace-check", "t,q_2t_origin");
  std::vector<double> x, y;
  for (int k = 3; k <= 10; ++k) {
    const double t = std::pow(4.0, -k);
    const double q = q_zero_at_origin(HeatTime(2.0 * t), cfg);
    tab << report::format_real(t) << ',' << report::format_real(q) << '\n';
    x.push_back(std::log(1.0 / t));
    y.push_back(q);
  }
  const RateFit fit = fit_line(x, y);
  const double target = 1.0 / (4.0 * special::kPi);
  const double rel = std::abs(fit.slope - target) / target;
  ss.table("trace-check-fit", "slope,intercept,target_slope,relative_error")
      << report::format_real(fit.slope) << ',' << report::format_real(fit.intercept) << ','
      << report::format_real(target) << ',' << report::format_real(rel) << '\n';
  const bool pass = rel <= 0.005;
  ss.note("trace-check", "slope_relative_error", pass, rel, 0.005);
  return pass;
}

bool cost_rate(Session& ss) {
  const auto ns = n_list_or(ss.settings(), kCostGrid);
  std::vector<EstimatorRecord> recs;
  for (std::size_t n : ns) {
    recs.push_back(study_record(ss.study(n, cost_R(ss.settings())), "cost", 0, ss.settings().options));
    ss.emit(recs.back());
  }
  if (recs.size() < 3) return true;
  const RateFit fit = fit_rate(recs, Regressor::LogN);
  const double target = 1.0 / (4.0 * special::kPi);
  const double rel = std::abs(fit.slope - target) / target;
  std::vector<double> band;
  for (const auto& r : recs) band.push_back(r.mean - std::log(static_cast<double>(r.n)) * target);
  const double width = *std::max_element(band.begin(), band.end()) - *std::min_element(band.begin(), band.end());
  ss.table("cost-rate-fit", "slope,intercept,target_slope,relative_error,residual_band")
      << report::format_real(fit.slope) << ',' << report::format_real(fit.intercept) << ','
      << report::format_real(target) << ',' << report::format_real(rel) << ','
      << report::format_real(width) << '\n';
  ss.note("cost-rate", "slope_relative_error", rel <= 0.1, rel, 0.1);
  ss.note("cost-rate", "residual_band", width <= 1.5, width, 1.5);
  return rel <= 0.1 && width <= 1.5;
}

bool displacement(Session& ss) {
  const auto ns = n_list_or(ss.settings(), kDisplacementGrid);
  std::vector<double> at_y, at_x;
  for (std::size_t n : ns) {
    const auto& st = ss.study(n, cost_R(ss.settings()));
    if (st.times.empty()) throw InvalidArgument("displacement: requires n >= 3");
    const auto ry = study_record(st, "displacement_at_y", 0, ss.settings().options);
    const auto rx = study_record(st, "displacement_at_x", 1, ss.settings().options);
    ss.emit(ry);
    ss.emit(rx);
    at_y.push_back(ry.mean / (3.0 * std::log(std::log(static_cast<double>(n)))));
    at_x.push_back(rx.mean);
  }
  if (ns.size() < 2) return true;
  const double sy = ratio_spread(at_y), sx = ratio_spread(at_x);
  ss.note("displacement", "at_y_over_3lnln_n_max_over_min", sy <= 3.0, sy, 3.0);
  ss.note("displacement", "at_x_max_over_min", sx <= 3.0, sx, 3.0);
  return sy <= 3.0 && sx <= 3.0;
}

bool quasi_orth(Session& ss) {
  const auto ns = n_list_or(ss.settings(), kDisplacementGrid);
  std::vector<EstimatorRecord> recs;
  for (std::size_t n : ns) {
    const auto& st = ss.study(n, cost_R(ss.settings()));
    if (st.times.empty()) throw InvalidArgument("quasi-orth: requires n >= 3");
    recs.push_back(study_record(st, "quasi_orth", 0, ss.settings().options));
    ss.emit(recs.back());
  }
  const double base = std::abs(recs.front().mean);
  bool pass = true;
  for (const auto& r : recs) {
    const double limit = 5.0 * base + 3.0 * r.std_error;
    pass = pass && std::abs(r.mean) <= limit;
    ss.note("quasi-orth", "abs_mean_n" + std::to_string(r.n), std::abs(r.mean) <= limit,
            std::abs(r.mean), limit);
  }
  const auto& last = recs.back();
  const double limit = 0.2 * std::log(static_cast<double>(last.n)) / (4.0 * special::kPi);
  ss.note("quasi-orth", "abs_mean_largest_n", std::abs(last.mean) <= limit, std::abs(last.mean), limit);
  return pass && std::abs(last.mean) <= limit;
}

bool bounded(Session& ss, const std::string& sub, const std::string& what,
             const std::vector<double>& values, double limit) {
  if (values.size() < 2) return true;
  const double spread = ratio_spread(values);
  ss.note(sub, what, spread <= limit, spread, limit);
  return spread <= limit;
}

bool hessian_moment(Session& ss) {
  std::vector<double> scaled;
  for (std::size_t n : n_list_or(ss.settings(), kDisplacementGrid)) {
    const auto rec = estimate_hessian_moment(n, scalar_R(ss.settings()), ss.settings().seed, 0,
                                             ss.settings().options);
    ss.emit(rec);
    scaled.push_back(rec.mean * std::log(static_cast<double>(n)));
  }
  return bounded(ss, "hessian-moment", "mean_times_ln_n_max_over_min", scaled, 5.0);
}

bool change_time(Session& ss) {
  std::vector<double> scaled;
  for (std::size_t n : n_list_or(ss.settings(), {256, 1024})) {
    const double nd = static_cast<double>(n);
    for (double factor : {4.0, 64.0}) {
      const double s = 1.0 / nd, t = factor / nd;
      if (!(t < 1.0)) continue;
      const auto rec = estimate_change_time(n, s, t, scalar_R(ss.settings()), ss.settings().seed,
                                            0, ss.settings().options);
      ss.emit(rec);
      scaled.push_back(rec.mean / (1.0 + std::log(t / s)));
    }
  }
  return bounded(ss, "change-time", "mean_over_1_plus_ln_t_over_s_max_over_min", scaled, 5.0);
}

bool local_consistency(Session& ss) {
  std::vector<double> scaled;
  for (std::size_t n : n_list_or(ss.settings(), {1024})) {
    const double nd = static_cast<double>(n);
    for (double factor : {1.0, 16.0, 256.0}) {
      const double t = factor / nd;
      if (!(t < 1.0)) continue;
      const auto rec = estimate_local_consistency(n, t, scalar_R(ss.settings()), ss.settings().seed,
                                                  ss.settings().options);
      ss.emit(rec);
      scaled.push_back(rec.mean * std::sqrt(nd * t));
    }
  }
  return bounded(ss, "local-consistency", "mean_times_sqrt_nt_max_over_min", scaled, 5.0);
}

bool kernel_comparison(Session& ss) {
  std::vector<double> values;
  for (std::size_t n : n_list_or(ss.settings(), {256, 1024})) {
    const double nd = static_cast<double>(n);
    for (double factor : {1.0, 4.0, 16.0}) {
      const double t = factor / nd;
      if (t > 1.0 / 16.0) continue;
      const auto rec = estimate_kernel_comparison(n, t, scalar_R(ss.settings()), ss.settings().seed,
                                                  ss.settings().options);
      ss.emit(rec);
      values.push_back(rec.mean);
    }
  }
  return bounded(ss, "kernel-comparison", "mean_max_over_min", values, 5.0);
}

bool w2_moment(Session& ss) {
  const auto ns = n_list_or(ss.settings(), kCostGrid);
  std::vector<double> scaled;
  bool jensen = true;
  for (std::size_t n : ns) {
    const auto& st = ss.study(n, cost_R(ss.settings()));
    std::vector<double> squares;
    for (const auto& r : st.replicas) squares.push_back(r.n_cost * r.n_cost);
    const auto [mv, sv] = mean_stderr(squares);
    EstimatorRecord rec = study_record(st, "cost", 0, ss.settings().options);
    const double first = rec.mean;
    rec.quantity = "cost_second_moment";
    rec.mean = std::sqrt(mv);
    rec.std_error = mv > 0.0 ? 0.5 * sv / std::sqrt(mv) : 0.0;
    rec.replicas = squares;
    ss.emit(rec);
    jensen = jensen && rec.mean >= first;
    if (n >= 2) scaled.push_back(rec.mean / std::log(static_cast<double>(n)));
  }
  ss.note("w2-moment", "jensen_second_moment_ge_mean", jensen, jensen ? 0.0 : 1.0, 0.0);
  return bounded(ss, "w2-moment", "mean_over_ln_n_max_over_min", scaled, 5.0) && jensen;
}

using Handler = bool (*)(Session&);

const std::vector<std::pair<std::string, Handler>>& handlers() {
  static const std::vector<std::pair<std::string, Handler>> list = {
      {"kernel-selfcheck", kernel_selfcheck}, {"trace-check", trace_check},
      {"cost-rate", cost_rate},               {"displacement", displacement},
      {"quasi-orth", quasi_orth},             {"hessian-moment", hessian_moment},
      {"change-time", change_time},           {"local-consistency", local_consistency},
      {"kernel-comparison", kernel_comparison}, {"w2-moment", w2_moment}};
  return list;
}

int run_one(Session& ss, const std::string& name, Handler h, std::ostream& err) {
  int code = kOk;
  try {
    code = h(ss) ? kOk : kCheckFailed;
  } catch (const ConvergenceError& e) {
    err << name << ": " << e.what() << '\n';
    code = kNonConvergence;
  } catch (const AccuracyError& e) {
    err << name << ": " << e.what() << '\n';
    code = kNonConvergence;
  } catch (const InvalidArgument& e) {
    err << name << ": " << e.what() << '\n';
    code = kConfigError;
  } catch (const Error& e) {
    err << name << ": " << e.what() << '\n';
    code = kNonConvergence;
  }
  ss.status(name, code);
  return code;
}

}  // namespace

const std::vector<std::string>& subcommands() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> v;
    for (const auto& [name, h] : handlers()) v.push_back(name);
    v.push_back("all");
    return v;
  }();
  return names;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"matchlab: random matching on the flat torus"};
  std::string sub, config_path, out_dir, n_list;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> replicas;
  std::optional<int> grid_m, threads;
  bool keep = false;
  app.add_option("subcommand", sub, "Experiment to run")->required()->check(CLI::IsMember(subcommands()));
  app.add_option("--config", config_path, "Key = value configuration file");
  app.add_option("--out", out_dir, "Output directory");
  app.add_option("--seed", seed, "Base seed");
  app.add_option("--replicas", replicas, "Replicas per estimate");
  app.add_option("--n", n_list, "Comma-separated sample sizes");
  app.add_option("--grid-m", grid_m, "Pixel grid side (0: default rule)");
  app.add_option("--threads", threads, "Worker threads (fallback: MATCHLAB_THREADS)");
  app.add_flag("--keep-replicas", keep, "Write per-replica values to the JSONL output");

  std::vector<std::string> argv_store{"matchlab"};
  argv_store.insert(argv_store.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (auto& a : argv_store) argv.push_back(a.data());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << e.what() << '\n';
    return kConfigError;
  }

  std::unique_ptr<Session> session;
  try {
    config::KeyValues kv;
    if (!config_path.empty()) kv = config::KeyValues::load(config_path);
    if (auto bad = kv.unknown_key(kKeys)) {
      err << "unknown config key '" << *bad << "'\n";
      return kConfigError;
    }
    if (seed) kv.set("seed", std::to_string(*seed));
    if (replicas) kv.set("replicas", std::to_string(*replicas));
    if (!n_list.empty()) kv.set("n_list", n_list);
    if (grid_m) kv.set("grid_m", std::to_string(*grid_m));
    if (!out_dir.empty()) kv.set("out", out_dir);
    if (keep) kv.set("keep_replicas", "true");
    if (threads) {
      kv.set("threads", std::to_string(*threads));
    } else if (!kv.get("threads")) {
      if (const char* env = std::getenv("MATCHLAB_THREADS")) kv.set("threads", env);
    }
    Settings settings = resolve(kv);
    parallel::set_threads(settings.threads);
    // Threads do not change results, so they stay out of the echo.
    config::KeyValues echo = kv;
    auto entries = echo.entries();
    entries.erase("threads");
    config::KeyValues cleaned;
    for (const auto& [k, v] : entries) cleaned.set(k, v);
    session = std::make_unique<Session>(std::move(settings), config_path, cleaned.echo_json(), out);
  } catch (const Error& e) {
    err << e.what() << '\n';
    return kConfigError;
  } catch (const std::filesystem::filesystem_error& e) {
    err << e.what() << '\n';
    return kConfigError;
  }

  int code = kOk;
  for (const auto& [name, h] : handlers()) {
    if (sub != "all" && sub != name) continue;
    code = std::max(code, run_one(*session, name, h, err));
  }
  session->status(sub == "all" ? "all" : sub, code);
  session->write_manifest();
  return code;
}

}  // namespace matchlab::cli
