#include <iostream>

#include "citing/cli.hpp"

int main(int argc, char** argv) { return citing::run_cli(argc, argv, std::cout, std::cerr); }
