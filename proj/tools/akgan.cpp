#include <iostream>

#include "akgan/commands.hpp"

int main(int argc, char** argv) { return akgan::run_cli(argc, argv, std::cout, std::cerr); }
