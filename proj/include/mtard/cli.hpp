#pragma once

#include <string>
#include <vector>

namespace mtard::cli {

/// Entry point shared by the binary and the CLI tests.
/// Exit codes: 0 ok, 1 runtime abort, 2 usage/config error.
int run(const std::vector<std::string>& args);

}  // namespace mtard::cli
