#include "riccati_lab/cli.hpp"

int main(int argc, char** argv) { return riccati_lab::cli::run_cli(argc, argv); }
