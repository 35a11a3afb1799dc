#include <iostream>

#include "cli.hpp"
#include "risce/allocator.hpp"

int main(int argc, char** argv) {
  risce::keep_freed_memory();
  return risce::cli::run(argc, argv, std::cout, std::cerr);
}
