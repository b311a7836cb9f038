#pragma once

#include <iosfwd>
#include <span>
#include <string>

namespace polylogue::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitData = 3;
inline constexpr int kExitNumeric = 4;

/// Runs one subcommand. `args` starts at the subcommand name (no program
/// name). Diagnostics go to `err`.
int run(std::span<const std::string> args, std::ostream& out, std::ostream& err);
int run(std::span<const std::string> args);

}  // namespace polylogue::cli
