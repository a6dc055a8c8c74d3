#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include <json.hpp>

#include "doctest.h"
#include "matchlab/cli.hpp"
#include "matchlab/config.hpp"
#include "matchlab/error.hpp"
#include "matchlab/experiments.hpp"
#include "matchlab/report.hpp"

using namespace matchlab;
namespace fs = std::filesystem;

namespace {

// Fresh scratch directory, removed on scope exit.
class TempDir {
 public:
  explicit TempDir(const std::string& tag)
      : path_(fs::temp_directory_path() / ("matchlab-test-" + tag + "-" + std::to_string(::getpid()))) {
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  const fs::path& path() const { return path_; }
  std::string str() const { return path_.string(); }

 private:
  fs::path path_;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// CSV bodies keyed by quantity (the file name up to the timestamp).
std::map<std::string, std::string> csv_bodies(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.path().extension() != ".csv") continue;
    const std::string name = e.path().filename().string();
    const auto cut = name.find("-2");  // timestamps start with the year
    out[name.substr(0, cut)] = slurp(e.path());
  }
  return out;
}

int run(std::vector<std::string> args, std::string* out_text = nullptr) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  if (out_text) *out_text = out.str() + err.str();
  return code;
}

}  // namespace

TEST_CASE("config grammar") {
  std::istringstream in(
      "# comment line\n"
      "seed = 42\n"
      "  n_list=64, 128 ,256   # trailing comment\n"
      "\n"
      "timing = true\n");
  const auto kv = config::KeyValues::parse(in);
  CHECK(kv.get("seed") == "42");
  CHECK(config::to_size_list("n_list", *kv.get("n_list")) == std::vector<std::size_t>{64, 128, 256});
  CHECK(config::to_bool("timing", *kv.get("timing")));
  CHECK_FALSE(kv.get("missing").has_value());
  CHECK(kv.unknown_key({"seed", "n_list"}) == "timing");
  CHECK_FALSE(kv.unknown_key({"seed", "n_list", "timing"}).has_value());

  std::istringstream broken("seed 42\n");
  CHECK_THROWS_AS(config::KeyValues::parse(broken), ConfigError);
  std::istringstream nokey(" = 3\n");
  CHECK_THROWS_AS(config::KeyValues::parse(nokey), ConfigError);
  CHECK_THROWS_AS(config::to_u64("seed", "-1"), ConfigError);
  CHECK_THROWS_AS(config::to_int("grid_m", "12x"), ConfigError);
  CHECK_THROWS_AS(config::to_real("mass_tol", ""), ConfigError);
  CHECK_THROWS_AS(config::to_bool("timing", "maybe"), ConfigError);
  CHECK_THROWS_AS(config::to_size_list("n_list", "4,,8"), ConfigError);
  CHECK(config::to_real("mass_tol", "1e-3") == 1e-3);
  CHECK_THROWS_AS(config::KeyValues::load("/nonexistent/matchlab.cfg"), ConfigError);

  const auto echo = nlohmann::json::parse(kv.echo_json());
  CHECK(echo["seed"] == "42");
}

TEST_CASE("CSV and JSONL records") {
  EstimatorRecord r;
  r.quantity = "cost";
  r.n = 64;
  r.t = 0.0;
  r.m = 128;
  r.R = 2;
  r.mean = 0.1;
  r.std_error = 0.25;
  r.seed = 7;
  r.replicas = {0.05, 0.15};
  r.extras = {{"reference", 1.5}};
  std::ostringstream csv;
  report::write_csv_header(csv);
  report::write_csv_row(csv, r);
  CHECK(csv.str() == "quantity,n,t,m,R,mean,stderr,seed,runtime_seconds\ncost,64,0,128,2,0.1,0.25,7,\n");
  r.runtime_seconds = 1.5;
  std::ostringstream timed;
  report::write_csv_row(timed, r);
  CHECK(timed.str() == "cost,64,0,128,2,0.1,0.25,7,1.5\n");

  std::ostringstream js;
  report::write_jsonl(js, r, "{\"seed\":\"7\"}", true);
  const auto j = nlohmann::json::parse(js.str());
  CHECK(j["quantity"] == "cost");
  CHECK(j["replicas"].size() == 2);
  CHECK(j["config"]["seed"] == "7");
  std::ostringstream lean;
  report::write_jsonl(lean, r, "{}", false);
  CHECK_FALSE(nlohmann::json::parse(lean.str()).contains("replicas"));

  CHECK(report::format_real(0.1) == "0.1");
  CHECK(std::stod(report::format_real(1.0 / 3.0)) == 1.0 / 3.0);
}

TEST_CASE("command line errors map to exit code 2") {
  TempDir dir("errors");
  CHECK(run({"no-such-command"}) == cli::kConfigError);
  CHECK(run({}) == cli::kConfigError);
  CHECK(run({"cost-rate", "--seed", "abc"}) == cli::kConfigError);

  const fs::path cfg = dir.path() / "bad.cfg";
  std::ofstream(cfg) << "seed = 1\nfrobnicate = yes\n";
  CHECK(run({"cost-rate", "--config", cfg.string(), "--out", dir.str()}) == cli::kConfigError);
  std::ofstream(cfg) << "replicas = 1\n";
  CHECK(run({"cost-rate", "--config", cfg.string(), "--out", dir.str()}) == cli::kConfigError);
  CHECK(run({"cost-rate", "--config", (dir.path() / "missing.cfg").string()}) == cli::kConfigError);
  CHECK(run({"cost-rate", "--n", "8,4", "--out", dir.str(), "--grid-m", "16"}) == cli::kConfigError);
  CHECK(std::find(cli::subcommands().begin(), cli::subcommands().end(), "all") != cli::subcommands().end());
}

TEST_CASE("kernel self-check writes a manifest") {
  TempDir dir("selfcheck");
  std::string text;
  CHECK(run({"kernel-selfcheck", "--out", dir.str(), "--seed", "3"}, &text) == cli::kOk);
  CHECK(text.find("FAIL") == std::string::npos);
  const auto m = nlohmann::json::parse(slurp(dir.path() / "manifest.json"));
  CHECK(m["exit_status"]["kernel-selfcheck"] == 0);
  CHECK(m["config"]["seed"] == "3");
  CHECK(m.contains("start"));
  CHECK_FALSE(m["checks"].empty());
  for (const auto& f : m["files"]) CHECK(fs::exists(f.get<std::string>()));
}

TEST_CASE("config file values yield to flags") {
  TempDir dir("override");
  const fs::path cfg = dir.path() / "run.cfg";
  std::ofstream(cfg) << "# small run\nseed = 5\nn_list = 4, 8\nreplicas = 2\ngrid_m = 16\n";
  CHECK(run({"cost-rate", "--config", cfg.string(), "--seed", "6", "--out", dir.str()}) == cli::kOk);
  const auto bodies = csv_bodies(dir.path());
  REQUIRE(bodies.count("cost") == 1);
  const std::string& body = bodies.at("cost");
  CHECK(body.find(",6,\n") != std::string::npos);
  CHECK(body.find("cost,4,") != std::string::npos);
  CHECK(body.find("cost,8,") != std::string::npos);
}

TEST_CASE("reruns reproduce CSV bodies for any thread count") {
  TempDir a("det-a"), b("det-b");
  const fs::path cfg = a.path() / "run.cfg";
  std::ofstream(cfg) << "seed = 11\nreplicas = 3\nscalar_replicas = 3\ngrid_m = 32\n";
  for (const std::string sub : {"cost-rate", "hessian-moment"}) {
    const std::string ns = sub == "cost-rate" ? "4,8" : "64,128";
    CHECK(run({sub, "--config", cfg.string(), "--n", ns, "--threads", "1", "--out", a.str()}) <= 1);
    CHECK(run({sub, "--config", cfg.string(), "--n", ns, "--threads", "3", "--out", b.str()}) <= 1);
  }
  const auto ba = csv_bodies(a.path()), bb = csv_bodies(b.path());
  CHECK(ba.size() >= 2);
  CHECK(ba == bb);
}

TEST_CASE("single-site cost run") {
  TempDir dir("single");
  std::string text;
  CHECK(run({"cost-rate", "--n", "1", "--grid-m", "64", "--replicas", "2", "--out", dir.str()}, &text) ==
        cli::kOk);
  const auto bodies = csv_bodies(dir.path());
  REQUIRE(bodies.count("cost") == 1);
  std::istringstream rows(bodies.at("cost"));
  std::string header, row;
  std::getline(rows, header);
  std::getline(rows, row);
  // quantity,n,t,m,R,mean,...: a single site pays the square's second moment.
  std::vector<std::string> cells;
  std::stringstream ss(row);
  for (std::string c; std::getline(ss, c, ',');) cells.push_back(c);
  REQUIRE(cells.size() >= 7);
  CHECK(std::abs(std::stod(cells[5]) - 1.0 / 6.0) <= 1e-3);
}
