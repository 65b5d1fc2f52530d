#include <iostream>

#include "kamtori/cli_io.hpp"

int main(int argc, char** argv) { return kam::run_cli(argc, argv, std::cout, std::cerr); }
