#pragma once

#include <string>
#include <vector>

namespace structmerge {

// Full command-line entry point; returns the process exit code
// (0 success, 1 verification failure, 2 configuration error).
int run_cli(const std::vector<std::string>& args);

}  // namespace structmerge
