#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "dyffpad/error.hpp"

namespace dyffpad::cli {

// Exit codes: 0 success, 1 unexpected failure, 2 usage error, and 3..7 for the
// library error families (io, format, config, data, compute).
inline constexpr int kExitOk = 0;
inline constexpr int kExitInternal = 1;
inline constexpr int kExitUsage = 2;

int exit_code_for(ErrorCode code) noexcept;

/// `args` excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace dyffpad::cli
