#pragma once

#include <string>
#include <vector>

namespace usad::cli {

// Runs one subcommand. Returns 0 on success, 1 on user error (bad config,
// data or arguments), 2 on internal error. Diagnostics go to stderr.
int dispatch(std::vector<std::string> args);

}  // namespace usad::cli
