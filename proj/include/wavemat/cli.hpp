#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace wavemat {

enum ExitCode : int {
  kExitOk = 0,
  kExitUsage = 1,
  kExitData = 2,
};

/// Entry point of the `wavemat` command line. `args` excludes the program
/// name. Returns the process exit code.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace wavemat
