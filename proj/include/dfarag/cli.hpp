#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace dfarag::cli {

enum ExitCode : int {
    exit_ok = 0,
    exit_usage = 1,
    exit_runtime = 2,
};

/// Entry point for the `dfarag` tool. `args` excludes the program name.
int run(const std::vector<std::string>& args, std::istream& in, std::ostream& out, std::ostream& err);

int run(int argc, const char* const* argv);

}  // namespace dfarag::cli
