#include <iostream>

#include "seqvessel/cli.hpp"

int main(int argc, char** argv) {
  return seqvessel::run_cli(std::vector<std::string>(argv + 1, argv + argc), std::cout, std::cerr);
}
