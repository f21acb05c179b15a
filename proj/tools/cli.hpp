#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace treepop::cli {

enum ExitCode : int {
  kOk = 0,
  kUsage = 1,
  kDataError = 2,
  kConvergence = 3,
};

/// Runs one command line (without the program name). Reports go to `out`,
/// messages and warnings to `err`.
int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace treepop::cli
