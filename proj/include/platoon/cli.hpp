#pragma once

namespace platoon {

// Entry point for the `platoon` tool. Returns the process exit code:
// 0 success, 1 invalid configuration, 2 runtime failure.
int run_cli(int argc, const char* const* argv);

}  // namespace platoon
