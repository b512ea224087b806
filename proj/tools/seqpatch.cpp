#include "seqpatch/cli/app.hpp"

#include <iostream>

int main(int argc, char** argv) { return seqpatch::run_cli(argc, argv, std::cout, std::cerr); }
