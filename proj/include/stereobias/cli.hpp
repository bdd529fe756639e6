#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace stereobias::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitInvalidInput = 2;

/// Runs one subcommand. `args` excludes the program name. Usage and
/// reports go to `out`, diagnostics to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace stereobias::cli
