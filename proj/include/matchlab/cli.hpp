#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace matchlab::cli {

enum ExitCode : int { kOk = 0, kCheckFailed = 1, kConfigError = 2, kNonConvergence = 3 };

/// Subcommand names in the order `all` runs them.
const std::vector<std::string>& subcommands();

/// Runs the command line `args` (program name excluded). Diagnostics go to
/// `err`, a short summary to `out`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace matchlab::cli
