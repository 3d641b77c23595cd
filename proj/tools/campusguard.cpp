#include <iostream>
#include <string>
#include <vector>

#include "campusguard/cli.hpp"

extern char** environ;

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return campusguard::cli::dispatch(args, campusguard::cli::environment(environ), std::cout, std::cerr);
}
