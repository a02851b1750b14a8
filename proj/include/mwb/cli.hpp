#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace mwb::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitData = 3;
inline constexpr int kExitNumerical = 4;

/// Runs `mwb <args...>` (args exclude the program name) and returns the exit code.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace mwb::cli
