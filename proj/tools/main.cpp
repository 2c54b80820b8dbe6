#include <iostream>

#include "slc_cli.hpp"

int main(int argc, char** argv) { return slc::cli::run_cli(argc, argv, std::cout, std::cerr); }
