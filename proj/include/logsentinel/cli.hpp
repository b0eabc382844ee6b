#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace logsentinel {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

/// Runs `logsentinel <subcommand> [options]`; args excludes the program
/// name. Progress goes to `out`, a one-line JSON error record to `err`.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace logsentinel
