#include <iostream>

#include "relight/cli.hpp"

int main(int argc, char** argv) { return relight::cli::run(argc, argv, std::cout, std::cerr); }
