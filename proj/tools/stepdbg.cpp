#include <unistd.h>

#include <iostream>

#include "stepdbg/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return stepdbg::run_cli(args, std::cin, std::cout, std::cerr, isatty(STDOUT_FILENO) != 0,
                          isatty(STDIN_FILENO) != 0);
}
