#pragma once

namespace lscg::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitData = 2;
inline constexpr int kExitEndpoint = 3;

/// Entry point of the `lscg` tool; returns the process exit code.
int run(int argc, char** argv);

}  // namespace lscg::cli
