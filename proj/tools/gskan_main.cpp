#include "gskan/cli.hpp"

int main(int argc, char** argv) { return gskan::run_cli(argc, argv); }
