#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "hetreg/errors.hpp"

namespace hetreg::cli {

// Bad arguments or config values; maps to exit code 2.
class UsageError : public Error {
 public:
  using Error::Error;
};

enum ExitCode : int { kOk = 0, kRuntimeFailure = 1, kUsage = 2 };

// `key = value` lines; blank lines and `#` comments are ignored.
std::vector<std::pair<std::string, std::string>> parse_config_text(const std::string& text);

// args excludes the program name, e.g. {"solve-ft", "--rho", "0.5"}.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

int main_entry(int argc, char** argv);

}  // namespace hetreg::cli
