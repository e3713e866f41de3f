#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace ccbf {

/// Entry point behind the ccbf-sim binary. Exit codes: 0 success, 1 usage,
/// 2 validation, 3 infeasible at runtime, 4 property failure. Failures
/// print one machine-readable line `error: <category>: <detail>` to err.
int run_command(const std::vector<std::string>& args, std::ostream& out,
                std::ostream& err);

}  // namespace ccbf
