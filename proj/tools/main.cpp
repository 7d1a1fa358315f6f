#include <vector>
#include <string>

#include "meansq/cli.hpp"

int main(int argc, char** argv) {
    return meansq::run_cli(std::vector<std::string>(argv + 1, argv + argc));
}
