#include <iostream>

#include "gsnkit/cli.h"

int main(int argc, char** argv) { return gsnkit::run_cli(argc, argv, std::cout, std::cerr); }
