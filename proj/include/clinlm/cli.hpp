#pragma once

// Command-line front end. Every subcommand reads explicit files and seeds, so
// repeated runs with the same flags give byte-identical outputs.

#include <iosfwd>
#include <map>
#include <string>
#include <vector>

namespace clinlm::cli {

/// Flat `key = value` lines; blank lines and lines starting with '#' are skipped.
std::map<std::string, std::string> read_config(std::istream& in);

/// args[0] is the subcommand. Returns 0 on success, 1 on a failed run and 2 on
/// a usage error; diagnostics go to err as a single line.
int dispatch(const std::vector<std::string>& args, std::istream& in, std::ostream& out, std::ostream& err);

}  // namespace clinlm::cli
