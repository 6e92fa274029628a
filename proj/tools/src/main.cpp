#include <iostream>
#include <string>
#include <vector>

#include "cascade/cli/commands.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  return cascade::cli::run(args, std::cout, std::cerr);
}
