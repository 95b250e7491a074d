#ifndef SPECDETECT_TOOLS_CLI_COMMANDS_H_
#define SPECDETECT_TOOLS_CLI_COMMANDS_H_

#include <iosfwd>
#include <string>
#include <vector>

namespace specdetect::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitDataFailure = 1;  // some inputs failed, or a runtime error
inline constexpr int kExitUsage = 2;        // bad flags or config

// Entry point shared by the executable and the tests. `args` excludes the
// program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace specdetect::cli

#endif  // SPECDETECT_TOOLS_CLI_COMMANDS_H_
