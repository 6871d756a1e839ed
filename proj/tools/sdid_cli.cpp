#include <iostream>

#include "sdid/cli.hpp"

int main(int argc, char** argv) { return sdid::main_entry(argc, argv, std::cout, std::cerr); }
