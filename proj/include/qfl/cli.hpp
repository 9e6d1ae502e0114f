#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace qfl::cli {

enum ExitCode : int {
  kOk = 0,
  kUsage = 1,      // bad arguments, malformed files or config
  kTolerance = 2,  // a verification check exceeded its tolerance
  kRuntime = 3,    // the computation itself failed
};

/// Runs the command line `args` (without the program name).
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace qfl::cli
