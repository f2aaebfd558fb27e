#pragma once

#include <iosfwd>

namespace bandppp::cli {

// Exit status: 0 success, 2 usage or configuration error, 3 numeric or
// convergence failure.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace bandppp::cli
