#pragma once

#include <string>
#include <vector>

namespace tsf {

// Command-line front end. Subcommands: synth, train, eval, bench, report.
// Exit codes: 0 success, 1 usage error, 2 runtime failure. Option precedence
// is flag > config file > default; unknown keys are rejected by name.
int run_cli(const std::vector<std::string>& args);
int run_cli(int argc, const char* const* argv);

// Rebuilds summary.txt and the plot-ready CSVs from a run directory's
// report.json. Idempotent: identical bytes on every invocation.
void emit_report(const std::string& run_dir);

}  // namespace tsf
