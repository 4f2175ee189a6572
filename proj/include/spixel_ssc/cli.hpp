#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace spixel_ssc::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitNumerical = 1;
inline constexpr int kExitUsage = 2;

/// Entry point of the `spixel-ssc` tool; `args` excludes the program name.
/// Returns the process exit code.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace spixel_ssc::cli
