#include "mmldp/cli.hpp"

int main(int argc, char** argv) { return mmldp::cli::run_cli(argc, argv); }
