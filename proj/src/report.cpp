#include "matchlab/report.hpp"

#include <charconv>
#include <cmath>
#include <ostream>

#include <json.hpp>

namespace matchlab::report {

std::string format_real(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

void write_csv_header(std::ostream& os) {
  os << "quantity,n,t,m,R,mean,stderr,seed,runtime_seconds\n";
}

void write_csv_row(std::ostream& os, const EstimatorRecord& rec) {
  os << rec.quantity << ',' << rec.n << ',' << format_real(rec.t) << ',' << rec.m << ',' << rec.R
     << ',' << format_real(rec.mean) << ',' << format_real(rec.std_error) << ',' << rec.seed << ',';
  if (rec.runtime_seconds) os << format_real(*rec.runtime_seconds);
  os << '\n';
}

void write_jsonl(std::ostream& os, const EstimatorRecord& rec, const std::string& config_echo_json,
                 bool keep_replicas) {
  nlohmann::ordered_json j;
  j["quantity"] = rec.quantity;
  j["n"] = rec.n;
  j["t"] = rec.t;
  j["m"] = rec.m;
  j["R"] = rec.R;
  j["mean"] = rec.mean;
  j["stderr"] = rec.std_error;
  j["seed"] = rec.seed;
  j["runtime_seconds"] = rec.runtime_seconds ? nlohmann::ordered_json(*rec.runtime_seconds) : nullptr;
  nlohmann::ordered_json extras = nlohmann::ordered_json::object();
  for (const auto& [k, v] : rec.extras) extras[k] = v;
  j["extras"] = extras;
  j["config"] = nlohmann::ordered_json::parse(config_echo_json.empty() ? "{}" : config_echo_json);
  if (keep_replicas) j["replicas"] = rec.replicas;
  os << j.dump() << '\n';
}

}  // namespace matchlab::report
