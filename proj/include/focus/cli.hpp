#pragma once

#include <ostream>
#include <string>
#include <vector>

#include "focus/error.hpp"

namespace focus::cli {

// Exit codes: 0 success, 2 usage, 3 config, 4 io, 5 benchmark, 6 numerical,
// 7 shape, 8 environment, 9 internal.
int exit_code(ErrorKind kind);

// args excludes the program name. Logs and errors go to err; the failure line
// is "error category=<kind> message=<text>".
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace focus::cli
