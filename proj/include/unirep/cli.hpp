#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace unirep {

// Exit codes: 0 success, 2 configuration or data error, 3 numerical failure.
inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitNumerical = 3;

// Entry point shared by the executable and the tests. `args` excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace unirep
