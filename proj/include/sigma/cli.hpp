#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace sigma {

/// Exit codes of the command-line tool.
enum ExitCode : int {
  kExitOk = 0,
  kExitInternal = 1,
  kExitConfig = 2,
  kExitNumeric = 3,
  kExitIo = 4,
};

/// Runs `sigma-fed <command> --config <path> [--out <dir>] [--seed <u64>]`.
/// `args` excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace sigma
