#pragma once

#include <iosfwd>

namespace metashift::cli {

/// Runs one CLI invocation. Returns the process exit code:
/// 0 ok, 2 io, 3 validation, 4 anything else.
int dispatch(int argc, char** argv);
int dispatch(int argc, char** argv, std::ostream& out, std::ostream& err);

}  // namespace metashift::cli
