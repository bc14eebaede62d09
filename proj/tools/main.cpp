#include "subpop/cli.hpp"

#include <iostream>

int main(int argc, char** argv) { return subpop::run_cli(argc, argv, std::cout, std::cerr); }
