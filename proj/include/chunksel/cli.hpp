#pragma once

#include <atomic>
#include <iosfwd>

namespace chunksel {

enum ExitCode : int {
  kExitOk = 0,
  kExitUsage = 2,        // bad flags, invalid config, resume mismatch
  kExitStartup = 3,      // a backend could not start or lacks a capability
  kExitPartial = 4,      // some problems failed, or a cold start kept nothing
  kExitIo = 5,           // I/O and anything unexpected
  kExitInterrupted = 6,  // drained on a signal; resume to finish
};

// Raised by SIGINT/SIGTERM once install_signal_handlers() ran.
std::atomic<bool>& drain_flag();
void install_signal_handlers();

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace chunksel
