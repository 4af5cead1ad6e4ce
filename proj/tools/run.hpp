#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace psfunmix::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 1;
inline constexpr int kExitNumerical = 2;

/// Runs one command line. Usage and error diagnostics go to `err`, progress
/// to `out`. Returns the process exit code.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace psfunmix::cli
