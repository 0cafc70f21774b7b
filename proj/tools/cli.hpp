#pragma once

#include <string>
#include <vector>

namespace igaiva::cli {

/// Runs one CLI invocation and returns its exit code:
/// 0 ok, 2 usage, 3 data error, 4 generator/network error, 1 internal.
int run(const std::vector<std::string>& args);

}  // namespace igaiva::cli
