#pragma once

#include <iostream>

namespace synthmr::cli {

// Exit codes: 0 success, 1 usage error, 2 data error.
int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr);

}  // namespace synthmr::cli
