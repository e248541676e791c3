#include <iostream>
#include <string>
#include <vector>

#include "eqr/cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return eqr::cli_dispatch(args, std::cout, std::cerr);
}
