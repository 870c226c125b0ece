#include <vector>

#include "usfg/cli.hpp"

int main(int argc, char** argv) {
    return usfg::cli::run(std::vector<std::string>(argv + 1, argv + argc));
}
