#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace svyconform {

/// Entry point of the svyconform tool. args[0] is the program name.
/// Returns the process exit code: 0 success, 1 error, 2 when a simulated
/// experiment falls outside one of its declared bands.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace svyconform
