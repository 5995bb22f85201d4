#include <iostream>

#include "spoa/commands.hpp"

int main(int argc, char** argv) {
  spoa::tune_allocator();
  return spoa::run_cli(argc, argv, std::cout, std::cerr);
}
