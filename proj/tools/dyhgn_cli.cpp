#include <iostream>

#include "dyhgn/cli.hpp"

int main(int argc, char** argv) { return dyhgn::cli::run(argc, argv, std::cout, std::cerr); }
