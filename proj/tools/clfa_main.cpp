#include "clfa/cli/commands.hpp"

int main(int argc, char** argv) { return clfa::cli::run_cli(argc, argv); }
