#pragma once

#include <string>
#include <vector>

namespace samct::cli {

/// Runs one subcommand. Returns the process exit code: 0 success, 2 config
/// error, 3 data error, 4 invariant violation, 1 anything else.
int run(int argc, char** argv);
int run(const std::vector<std::string>& args);

}  // namespace samct::cli
