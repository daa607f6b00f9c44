#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace qdesign::cli {

inline constexpr const char* version = "1.0.0";

/// Exit codes: 0 success, 1 usage or input error, 2 not converged / check failed.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run_cli(int argc, char** argv);

} // namespace qdesign::cli
