#pragma once

#include <iosfwd>
#include <string>
#include <vector>

// Command-line front end.  Subcommands: gen-data, train, eval, attribute,
// ablate-collapse.  Options come from an optional key=value config file
// (--config path) plus --key value overrides, applied left to right (last
// wins); unknown keys are rejected.  Every run echoes its fully resolved
// option set to <out>/resolved-config.txt, which can be replayed verbatim
// via --config.
//
// Exit codes: 0 success, 1 usage/config error, 2 runtime/numeric error.

namespace origami {

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace origami
