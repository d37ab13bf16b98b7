#pragma once

#include <filesystem>
#include <iosfwd>

namespace panda {

/// Parses argv and runs one command. Returns the process exit code; never
/// calls exit(). Diagnostics go to `err`, results to `out`, and `play` reads
/// its moves from `in`.
int run_cli(int argc, const char* const* argv, std::istream& in, std::ostream& out, std::ostream& err);

/// Runs root: $PANDA_RUNS_DIR if set, else "runs".
std::filesystem::path default_runs_root();

}  // namespace panda
