#include "costforge/cli.hpp"

int main(int argc, char** argv) { return costforge::cli::run_command(argc, argv); }
