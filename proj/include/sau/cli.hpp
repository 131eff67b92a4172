#pragma once

// Command-line entry point: gradcheck, oracle-check, bench, make-data, train, infer, export-ppm.
// Exit codes: 0 success (all checks pass), 1 verification or training failure, 2 usage error.

#include <iosfwd>
#include <string>
#include <vector>

namespace sau::cli {

constexpr int kExitOk = 0;
constexpr int kExitFail = 1;
constexpr int kExitUsage = 2;

/// `args` excludes the program name. Reports go to `out`, diagnostics and the resolved
/// configuration to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Applies SAU_THREADS (if set) to the OpenMP runtime. Throws std::invalid_argument for a
/// value that is not a positive integer.
void apply_thread_env();

}  // namespace sau::cli
