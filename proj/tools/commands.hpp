#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace lesioncad::cli {

// Exit codes.
inline constexpr int kOk = 0;
inline constexpr int kRuntimeFailure = 1;
inline constexpr int kValidationFailure = 2;

// Parses and runs one subcommand. Never throws.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace lesioncad::cli
