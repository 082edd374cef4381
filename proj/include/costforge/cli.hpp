#pragma once

#include <atomic>

namespace costforge::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitPartialFailure = 1;
inline constexpr int kExitConfigError = 2;

/// Entry point for the costforge binary. Subcommands: generate,
/// build-dataset, score, reward-serve, eval, latency.
int run_command(int argc, const char* const* argv);

/// Set by SIGINT while a command runs; long commands stop taking new work and
/// flush what finished.
std::atomic<bool>& cancel_flag();

}  // namespace costforge::cli
