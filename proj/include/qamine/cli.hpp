#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace qamine::cli {

inline constexpr const char* kToolVersion = "0.3.0";

/// Process exit statuses (sysexits-style where one exists).
enum ExitCode : int {
  kOk = 0,
  kFailure = 1,
  kUsage = 2,
  kDataError = 65,
  kNoInput = 66,
};

/// Runs one subcommand: ingest, filter, split, decontaminate, stats, train,
/// index, search or eval. `args` excludes the program name. Errors are
/// reported on `err` as a single JSON line.
int run_command(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace qamine::cli
