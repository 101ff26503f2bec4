#pragma once

#include <iostream>
#include <ostream>

namespace dmcl::cli {

enum ExitCode : int { kOk = 0, kVerificationFailed = 1, kUsage = 2, kDataError = 3 };

int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr);

}  // namespace dmcl::cli
