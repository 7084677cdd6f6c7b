#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace snncodec::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

/// Runs one command line (args excludes the program name). Primary output
/// goes to `out`; progress and timing go to `log`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& log);

/// Worker cap: SNNCODEC_THREADS if set, else the hardware concurrency.
unsigned worker_limit();

}  // namespace snncodec::cli
