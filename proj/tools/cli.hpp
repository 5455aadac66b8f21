#pragma once

#include <string>
#include <vector>

namespace gedlab::cli {

enum ExitCode : int { kOk = 0, kUsage = 1, kDataError = 2 };

// Runs one subcommand (gen, label, train, eval, attn, gradcheck, sweep).
// argv[0] is the program name. Diagnostics go to standard error.
int dispatch(int argc, const char* const* argv);
// Same, with the arguments after the program name.
int dispatch(const std::vector<std::string>& args);

}  // namespace gedlab::cli
