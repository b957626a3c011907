#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace spudrf::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitRuntime = 2;

/// Entry point behind the `spudrf` binary. args excludes the program name.
/// Machine-readable output goes to `out`, progress and errors to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace spudrf::cli
