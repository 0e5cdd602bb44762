#include <iostream>
#include <string>
#include <vector>

#include "mambarecon/allocator.hpp"
#include "mambarecon/cli.hpp"

int main(int argc, char** argv) {
  mambarecon::retain_freed_memory();
  std::vector<std::string> args(argv + 1, argv + argc);
  return mambarecon::dispatch(args, std::cout, std::cerr);
}
