#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace pirank::cli {

enum ExitCode : int {
  kOk = 0,
  kUsage = 1,
  kDataError = 2,
  kNumeric = 3,
};

/// Runs one verb: gen-synthetic, train, evaluate or bench-scaling.
/// args[0] is the program name.
int run(std::vector<std::string> args, std::ostream& out, std::ostream& err);

/// Expands `--config FILE` into flags. The file holds `key = value` lines
/// (`#` starts a comment); each becomes `--key=value` (`--key ""` when the value
/// is empty), inserted before the remaining flags so explicit flags win.
std::vector<std::string> expand_config(const std::vector<std::string>& args);

}  // namespace pirank::cli
