#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace discover {

/// Exit codes: 0 success, 2 configuration or usage error, 3 any other failure.
inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitFailure = 3;

/// Runs one `discover` command; args excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace discover
