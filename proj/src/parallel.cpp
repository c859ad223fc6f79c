// Apache License, Version 2.0, refer to LICENSE.txt

#include "otb/parallel.hpp"

namespace otb::par {

namespace {
int g_threads = 1;

int hardware_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}
}  // namespace

int threads() { return g_threads; }

void set_threads(int n) {
  if (n <= 0) n = hardware_threads();
  g_threads = n < 1 ? 1 : n;
}

}  // namespace otb::par
