#include <iostream>

#include "ace/cli.hpp"

int main(int argc, char** argv) {
    return ace::cli::run(std::vector<std::string>(argv + 1, argv + argc), std::cout, std::cerr);
}
