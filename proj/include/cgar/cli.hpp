#pragma once

#include <string>
#include <vector>

namespace cgar {

inline constexpr const char* kToolVersion = "0.1.0";

// Entry point behind main(). Exit codes: 0 success, 1 usage error,
// 2 validation failure, 3 numerical failure, 4 I/O failure.
int run_cli(int argc, const char* const* argv);
// Convenience overload for tests; args exclude the program name.
int run_cli(const std::vector<std::string>& args);

}  // namespace cgar
