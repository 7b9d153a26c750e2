#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace fedld::cli {

/// Entry point shared by the executable and the tests. Results go to `out`;
/// failures produce {"error": {...}} on `err` and a nonzero exit code:
/// 2 config, 3 input, 4 parse, 5 infeasible, 6 numerical, 7 divergence, 1 other.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace fedld::cli
