#define DOCTEST_CONFIG_IMPLEMENT
#include <doctest.h>

#include "spoa/commands.hpp"

int main(int argc, char** argv) {
  spoa::tune_allocator();
  doctest::Context context(argc, argv);
  return context.run();
}
