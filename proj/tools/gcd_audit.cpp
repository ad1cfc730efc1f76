#include <iostream>
#include <string>
#include <vector>

#include "gcd_audit/cli.hpp"

int main(int argc, char ** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return gcd_audit::cli::dispatch(args, std::cout, std::cerr);
}
