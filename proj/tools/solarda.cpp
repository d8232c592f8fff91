#include <iostream>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include "solarda/cli.hpp"

int main(int argc, char** argv) {
#if defined(__GLIBC__)
  // Training reallocates the same large buffers every step; keep them on the heap.
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
#endif
  return solarda::cli::run(argc, argv, std::cout, std::cerr);
}
