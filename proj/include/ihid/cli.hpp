#pragma once

namespace ihid {

// Single-binary entry point with subcommands. Returns the process exit code:
// 0 success, 1 usage error, 2 data/runtime error. Every successful command
// prints a one-line JSON summary to stdout.
int run_cli(int argc, char** argv);

}  // namespace ihid
