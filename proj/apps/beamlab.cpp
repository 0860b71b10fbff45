#include "beamlab/cli_reporting.hpp"

int main(int argc, char** argv) { return beamlab::run_cli(argc, argv); }
