#pragma once

namespace facediff::cli {

// Exit codes: 0 success, 1 runtime failure, 2 usage, config or dataset error.
inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

int run(int argc, char** argv);

}  // namespace facediff::cli
