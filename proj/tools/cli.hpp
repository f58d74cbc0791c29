#pragma once

#include <string>
#include <vector>

namespace aslmrf::cli {

enum ExitCode : int { kOk = 0, kUsage = 2, kNumerical = 3 };

/// Runs the command line; returns the process exit code. Never throws.
int run(int argc, const char *const *argv);
int run(const std::vector<std::string> &args);

} // namespace aslmrf::cli
