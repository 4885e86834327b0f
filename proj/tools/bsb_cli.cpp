#include <iostream>

#include "bsb/cli.hpp"

int main(int argc, char** argv) { return bsb::cli::run(argc, argv, std::cout, std::cerr); }
