#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace solarda::cli {

enum ExitCode : int { kOk = 0, kFailure = 1, kUsage = 2, kDataError = 3, kContract = 4 };

inline constexpr const char* kVersion = "1.0.0";

/// args excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace solarda::cli
