#pragma once

// Command-line entry point shared by the gcd-audit tool and its tests.

#include <iosfwd>
#include <string>
#include <vector>

namespace gcd_audit::cli {

enum ExitCode : int {
    kExitOk         = 0,
    kExitValidation = 1,  // bad input, bad flags, grammar/format/stats errors
    kExitIo         = 2,  // unreadable files, backend failures
};

// `args` excludes the program name. Machine-readable results go to `out`,
// progress and diagnostics to `err`.
int dispatch(const std::vector<std::string> & args, std::ostream & out, std::ostream & err);

// Logical CPU count capped at 16.
size_t default_jobs();

}  // namespace gcd_audit::cli
