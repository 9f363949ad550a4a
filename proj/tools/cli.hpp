#pragma once

#include <iosfwd>

namespace msc::cli {

/// Runs one subcommand. Returns 0 on success, 1 on a domain error and 2 on a
/// usage error. Normal output goes to `out`, diagnostics to `err`.
int dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace msc::cli
