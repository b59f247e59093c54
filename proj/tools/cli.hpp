#pragma once

#include <iosfwd>

namespace nvlab::cli {

enum ExitCode : int {
  kOk = 0,
  kVerifyFailed = 1,
  kUsage = 2,        ///< unknown flag, missing argument, bad value
  kIoError = 3,      ///< unreadable input, unwritable output, refused overwrite
  kInvalidData = 4,  ///< rejected CSV or parameter file
  kRuntime = 5,
};

/// Entry point shared by the executable and the tests.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace nvlab::cli
