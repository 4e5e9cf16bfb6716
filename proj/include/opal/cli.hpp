// Command-line harness. run_cli is the whole program; the executable only
// forwards argv, so tests drive subcommands in-process.
//
// quantize, sweep-mse and softmax-eval accept --config with key=value lines
// whose keys are their long option names; explicit flags override the file.
// simulate reads a decoder config through --config, and cost reads unit costs
// through --config.

#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace opal {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 1;
inline constexpr int kExitIo = 2;
inline constexpr int kExitNumeric = 3;

/// `args` excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run_cli(int argc, const char* const* argv);

/// Parses "0,1,2" style lists; throws ConfigError naming `what`.
std::vector<long long> parse_int_list(const std::string& text, const std::string& what);

}  // namespace opal
