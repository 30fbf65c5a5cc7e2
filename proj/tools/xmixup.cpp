#include <iostream>

#include "xmixup/cli.hpp"

int main(int argc, char** argv) { return xmixup::cli::run(argc, argv, std::cout, std::cerr); }
