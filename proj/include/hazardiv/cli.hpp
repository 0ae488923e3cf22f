#pragma once

#include <iosfwd>

namespace hazardiv {

/// Entry point of the hazardiv command-line tool. Returns the exit code:
/// 0 success, 2 input or contract error, 3 estimation failure.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace hazardiv
