#pragma once

#include <iosfwd>

namespace khe::cli {

/// Exit codes of khe_bench.
enum ExitCode : int {
    kExitOk = 0,
    kExitOther = 1,
    kExitConfig = 2,
    kExitDivergence = 3,
    kExitOracle = 4,
};

/// Parses the command line and runs one subcommand (kernel, propagate, mc,
/// fd, compare, table1, selftest). Progress goes to `out`, diagnostics to
/// `err`; the return value is an ExitCode.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace khe::cli
