#pragma once

#include <iosfwd>

namespace gsnkit {

/// Exit codes of the command-line tool.
enum ExitCode : int {
  kExitOk = 0,
  kExitDomainFailure = 1,
  kExitUsage = 2,
  kExitBackendFailure = 3,
};

/// Entry point of the `gsnkit` tool. Data goes to `out`, diagnostics to `err`.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace gsnkit
