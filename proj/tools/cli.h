#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace viso::cli {

// Runs one `viso` subcommand. args excludes the program name.
// Returns 0 on success, 1 on usage errors, 2 on runtime errors.
int run_command(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

// Asks a running `stream` or `serve` command to shut down cleanly.
void request_interrupt();

}  // namespace viso::cli
