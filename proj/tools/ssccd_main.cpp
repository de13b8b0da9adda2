#include "commands.hpp"

int main(int argc, char** argv) { return ssccd::cli::run_cli(argc, argv); }
