#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace haluprobe::cli {

enum ExitCode : int {
  kExitOk = 0,
  kExitUsage = 1,
  kExitData = 2,
  kExitDivergence = 3,
};

// Runs one subcommand. `args` excludes the program name. Every message goes
// to `err`; results are written only to files.
int run(const std::vector<std::string>& args, std::ostream& err);

}  // namespace haluprobe::cli
