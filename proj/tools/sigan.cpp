#include <iostream>
#include <string>
#include <vector>

#include "sigan/cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv, argv + argc);
    return sigan::cli::run(args, std::cout, std::cerr).exit_code;
}
