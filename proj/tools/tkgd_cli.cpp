#include <iostream>

#include "tkgd/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  return tkgd::run_command(args, std::cout, std::cerr);
}
