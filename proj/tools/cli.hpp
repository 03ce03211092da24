#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace pcan::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitIo = 3;
inline constexpr int kExitNumeric = 4;

// Runs one CLI invocation; args excludes the program name. Results go to
// `out` (JSON only when --json is given), diagnostics to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace pcan::cli
