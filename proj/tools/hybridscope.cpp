#include "hybridscope/cli.hpp"

int main(int argc, char** argv) { return hybridscope::run_cli(argc, argv); }
