#include <iostream>

#include "cdistill/cli.hpp"

int main(int argc, char** argv) { return cdistill::run_cli(argc, argv, std::cout, std::cerr); }
