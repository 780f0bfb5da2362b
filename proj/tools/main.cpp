#include <iostream>

#include "drate/cli.hpp"

int main(int argc, char** argv) { return drate::cli::run(argc, argv, std::cout, std::cerr); }
