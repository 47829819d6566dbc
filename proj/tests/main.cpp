#define DOCTEST_CONFIG_IMPLEMENT
#include "deeptfp/tensor.hpp"
#include "doctest.h"

int main(int argc, char** argv) {
  deeptfp::tensor::tune_allocator();
  doctest::Context context(argc, argv);
  return context.run();
}
