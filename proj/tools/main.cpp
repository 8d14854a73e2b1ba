#include <iostream>

#include "rnf/cli.hpp"

int main(int argc, char** argv) {
    return rnf::run_cli(argc, argv, std::cout, std::cerr);
}
