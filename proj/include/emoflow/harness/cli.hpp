#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace emoflow::harness {

// Process exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitData = 3;
inline constexpr int kExitNumeric = 4;

/// The `emoflow` command line. `args` excludes the program name. Results go
/// to `out`, progress and error messages to `err`. Never throws; failures map
/// to the exit codes above.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace emoflow::harness
