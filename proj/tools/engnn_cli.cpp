#include <iostream>

#include "engnn/cli.hpp"

int main(int argc, char** argv) { return engnn::run_cli(argc, argv, std::cout, std::cerr); }
