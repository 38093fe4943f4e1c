#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace cadbench::cli {

// Parses argv (without the program name) and runs one subcommand. Returns 0
// on success, 2 on usage errors and 1 on runtime failures; failures print a
// single "error: <message>" line to err.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace cadbench::cli
