#include <iostream>

#include "panda/cli.hpp"

int main(int argc, char** argv) { return panda::run_cli(argc, argv, std::cin, std::cout, std::cerr); }
