#include <iostream>

#include "hazardiv/cli.hpp"

int main(int argc, char** argv) { return hazardiv::run_cli(argc, argv, std::cout, std::cerr); }
