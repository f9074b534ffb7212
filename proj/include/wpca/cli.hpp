#pragma once

#include <string>
#include <vector>

namespace wpca {

// Parses and executes one command-line invocation. `args` holds the
// subcommand and its flags, program name excluded. Returns the process
// exit code: 0 on success, 1 on a validation or usage error, 2 on a
// runtime or numeric failure. The WPCA_SEED environment variable, when
// set, overrides any --seed flag.
int dispatch(std::vector<std::string> args);

}  // namespace wpca
