#pragma once

namespace ssccd::cli {

/// Parses arguments, runs one subcommand and maps errors to exit codes.
int run_cli(int argc, char** argv);

}  // namespace ssccd::cli
