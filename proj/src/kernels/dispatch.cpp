#include "sfield/kernels.hpp"

#include <cstdio>
#include <cstdlib>
#include <cstring>

namespace sfield::kernels {

namespace {

bool cpu_has_avx2() {
#if defined(__x86_64__) || defined(_M_X64)
  return __builtin_cpu_supports("avx2");
#else
  return false;
#endif
}

const KernelTable* resolve(const char* request) {
  if (request && std::strcmp(request, "scalar") == 0) return &scalar_table();
  if (request && std::strcmp(request, "avx2") == 0) {
    const KernelTable* t = avx2_table();
    if (t && cpu_has_avx2()) return t;
    std::fprintf(stderr,
                 "scenefield: SCENEFIELD_KERNELS=avx2 requested but AVX2 is "
                 "unavailable; using scalar kernels\n");
    return &scalar_table();
  }
  // auto (also the default for unknown values)
  const KernelTable* t = avx2_table();
  if (t && cpu_has_avx2()) return t;
  return &scalar_table();
}

const KernelTable* g_active = nullptr;

}  // namespace

const KernelTable& active() {
  if (!g_active) g_active = resolve(std::getenv("SCENEFIELD_KERNELS"));
  return *g_active;
}

bool select(const char* name) {
  if (std::strcmp(name, "scalar") == 0) {
    g_active = &scalar_table();
    return true;
  }
  if (std::strcmp(name, "avx2") == 0) {
    const KernelTable* t = avx2_table();
    if (!t || !cpu_has_avx2()) return false;
    g_active = t;
    return true;
  }
  if (std::strcmp(name, "auto") == 0) {
    g_active = resolve(nullptr);
    return true;
  }
  return false;
}

}  // namespace sfield::kernels
