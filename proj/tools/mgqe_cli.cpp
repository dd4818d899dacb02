#include "mgqe/cli.hpp"

#include <iostream>

int main(int argc, char** argv) { return mgqe::cli::run(argc, argv, std::cout, std::cerr); }
