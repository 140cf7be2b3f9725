#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace sigan::cli {

enum ExitCode : int {
    kOk = 0,
    kUsage = 1,
    kData = 2,
    kRuntime = 3,
};

struct CommandResult {
    int exit_code = kOk;
    std::string message;
};

/// Parses and runs one command line (args[0] is the program name). Normal
/// output goes to `out`, diagnostics to `err`.
CommandResult run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Seed used when none is given: $SIGAN_SEED, else 0.
unsigned long long default_seed();

}  // namespace sigan::cli
