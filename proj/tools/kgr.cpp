#include <iostream>

#include "kgr/cli.hpp"

int main(int argc, char** argv) { return kgr::run_cli(argc, argv, std::cout, std::cerr); }
