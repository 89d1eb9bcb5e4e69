#pragma once

#include <iosfwd>

namespace relight::cli {

/// Parses argv and dispatches to a subcommand: build-scene, render, fit,
/// make-pairs, eval-loss, serve, synth. The last line on `out` is a JSON
/// summary holding every output path; logs go to `err`.
/// Returns 0 on success, 1 on a domain error and 2 on a usage error.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace relight::cli
