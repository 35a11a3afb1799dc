#pragma once

#include <iosfwd>

namespace risce::cli {

enum ExitCode : int {
  kOk = 0,
  kFailure = 1,
  kUsage = 2,
  kDataFormat = 3,
  kDivergence = 4,
};

/// Entry point of the `risce` command; writes results to `out` and
/// diagnostics to `err`.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace risce::cli
