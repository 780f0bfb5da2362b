#pragma once

#include <iosfwd>

namespace drate::cli {

// Exit codes.
inline constexpr int kOk = 0;
inline constexpr int kUsage = 2;
inline constexpr int kData = 3;
inline constexpr int kRuntime = 4;

/// Entry point shared by the drate binary and the tests.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace drate::cli
