#pragma once

#include <iostream>

namespace snmt::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitFailure = 2;

/// Runs one `snmt` subcommand. Results go to `out`, progress and errors to `err`.
int dispatch(int argc, const char* const* argv, std::ostream& out = std::cout,
             std::ostream& err = std::cerr);

}  // namespace snmt::cli
