#include <iostream>

#include "origami/cli.hpp"

int main(int argc, char** argv) {
    return origami::run_cli({argv + 1, argv + argc}, std::cout, std::cerr);
}
