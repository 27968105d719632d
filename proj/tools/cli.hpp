#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace rotary::cli {

enum ExitCode : int {
  kOk = 0,
  kUsage = 1,
  kInitializationFailure = 2,
  kInputError = 3,  // unreadable or malformed files, invalid scenarios
  kInternalError = 4,
};

/// Runs one command line. `args` excludes the program name. Reports go to
/// `out` unless redirected with --out; diagnostics always go to `err`.
int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace rotary::cli
