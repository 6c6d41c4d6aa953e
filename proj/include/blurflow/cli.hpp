#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace blurflow::cli {

// Exit codes: 0 success, 1 domain/configuration/usage error, 2 I/O error.
inline constexpr int kExitOk = 0;
inline constexpr int kExitDomain = 1;
inline constexpr int kExitIo = 2;

// Runs one subcommand (psf, synth, dataset, flow-scene, estimate, eval, render). args excludes
// the program name. Machine-readable JSON goes to `out` when --json is given; diagnostics go
// to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace blurflow::cli
