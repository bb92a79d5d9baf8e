#include <string>
#include <vector>

#include "czsl/experiment.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return czsl::cli_main(args);
}
