#pragma once

namespace vdforge::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitUsage = 2;

// Runs one `vdforge` invocation and returns its exit code.
int dispatch(int argc, char** argv);

}  // namespace vdforge::cli
