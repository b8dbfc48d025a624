#pragma once

#include <iosfwd>

namespace kgr {

// Entry point of the kgr executable. Exit codes: 0 ok, 1 internal failure,
// 2 usage error, 3 data error, 4 numeric failure.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace kgr
