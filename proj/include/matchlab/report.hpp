#pragma once

#include <iosfwd>
#include <string>

#include "matchlab/experiments.hpp"

namespace matchlab::report {

/// quantity,n,t,m,R,mean,stderr,seed,runtime_seconds
void write_csv_header(std::ostream& os);
/// Reals in shortest round-trip form; runtime_seconds is left empty unless
/// the record was timed.
void write_csv_row(std::ostream& os, const EstimatorRecord& rec);

/// One JSON object per line with the CSV fields, the extras and the config
/// echo; per-replica values only when keep_replicas is set.
void write_jsonl(std::ostream& os, const EstimatorRecord& rec, const std::string& config_echo_json,
                 bool keep_replicas);

/// Shortest decimal that reads back to the same double.
std::string format_real(double v);

}  // namespace matchlab::report
