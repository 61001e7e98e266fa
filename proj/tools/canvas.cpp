#include <iostream>
#include <string>
#include <vector>

#include "canvas/cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return canvas::run_canvas(args, std::cout, std::cerr);
}
