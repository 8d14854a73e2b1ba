#pragma once

#include <iosfwd>

namespace rnf {

enum ExitCode : int {
    exit_ok = 0,
    exit_assertion = 1,  // an experiment or bound check did not hold
    exit_usage = 2,      // bad flags, bad config values
    exit_io = 3,         // unreadable/unwritable or malformed files
};

// Entry point behind the `rnf` executable. Subcommands: gen-data, train, quantize,
// calibrate, detect, pipeline, validate-theory, report. Never throws.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

} // namespace rnf
