#include "sbfd/cli.hpp"

int main(int argc, char** argv) { return sbfd::cli::cli_main(argc, argv); }
