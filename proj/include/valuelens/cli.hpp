#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace valuelens {

// Operator CLI. args excludes the program name. Exit codes: 0 success, 1 failure
// (one "error: <code>: <message>" line on err), 2 usage error.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace valuelens
