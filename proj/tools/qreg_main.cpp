#include "qreg/cli.hpp"

#include <iostream>

int main(int argc, char** argv) { return qreg::cli_main(argc, argv, std::cout, std::cerr); }
