#include <iostream>
#include <vector>

#include "mtbp/cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return mtbp::run_cli(args, std::cout, std::cerr);
}
