#include <iostream>
#include <string>
#include <vector>

#include "svyconform/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  return svyconform::run_cli(args, std::cout, std::cerr);
}
