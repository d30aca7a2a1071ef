#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace funie::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitRuntime = 2;

/// Parses and executes one command. Normal output goes to `out`, errors and
/// per-file failures to `err`. Returns the process exit code.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Nearest positive multiple of 32 to `n`.
int nearest_multiple_of_32(int n);

}  // namespace funie::cli
