#include <iostream>

#include "valuelens/cli.hpp"

int main(int argc, char** argv) {
    return valuelens::run_cli({argv + 1, argv + argc}, std::cout, std::cerr);
}
