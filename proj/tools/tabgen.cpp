#include <iostream>
#include <string>
#include <vector>

#include "tabpc/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  return tabpc::cli::run(args, std::cout, std::cerr);
}
