#include <cstdlib>
#include <cstring>

#include "dag/kernels.hpp"

namespace dag::kernels {

#if defined(DAG_HAVE_AVX2_TU)
const KernelTable* avx2_table_if_supported();  // kernels_avx2.cpp
#endif
#if defined(DAG_HAVE_NEON_TU)
const KernelTable* neon_table_if_supported();  // kernels_neon.cpp
#endif

const KernelTable* avx2() {
#if defined(DAG_HAVE_AVX2_TU)
  return avx2_table_if_supported();
#else
  return nullptr;
#endif
}

const KernelTable* neon() {
#if defined(DAG_HAVE_NEON_TU)
  return neon_table_if_supported();
#else
  return nullptr;
#endif
}

namespace {

const KernelTable& choose() {
  const char* want = std::getenv("DAG_KERNELS");
  if (want != nullptr) {
    if (std::strcmp(want, "scalar") == 0) return scalar();
    if (std::strcmp(want, "avx2") == 0 && avx2() != nullptr) return *avx2();
    if (std::strcmp(want, "neon") == 0 && neon() != nullptr) return *neon();
    // Unknown or unsupported request falls through to auto selection.
  }
  if (const KernelTable* t = avx2()) return *t;
  if (const KernelTable* t = neon()) return *t;
  return scalar();
}

}  // namespace

const KernelTable& active() {
  static const KernelTable& table = choose();
  return table;
}

}  // namespace dag::kernels
