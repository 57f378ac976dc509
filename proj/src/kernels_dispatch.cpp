#include <cstdlib>
#include <stdexcept>

#include "teco/kernels.hpp"

namespace teco::kern {

const Kernels* avx2_table();  // kernels_avx2.cpp (nullptr off x86)
const Kernels* neon_table();  // kernels_neon.cpp (nullptr off aarch64)

namespace {

bool cpu_has_avx2() {
#if defined(__x86_64__) || defined(__i386__)
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

const Kernels* select() {
  if (const char* env = std::getenv("TECO_KERNELS")) {
    const Kernels* t = table_by_name(env);
    if (!t) {
      throw std::runtime_error(std::string("TECO_KERNELS=") + env +
                               " is not available on this CPU/build");
    }
    return t;
  }
  if (cpu_has_avx2()) {
    if (const Kernels* t = avx2_table()) return t;
  }
  if (const Kernels* t = neon_table()) return t;
  return &scalar_table();
}

}  // namespace

const Kernels& active() {
  static const Kernels* chosen = select();
  return *chosen;
}

const Kernels* table_by_name(const std::string& name) {
  if (name == "scalar") return &scalar_table();
  if (name == "avx2" && cpu_has_avx2()) return avx2_table();
  if (name == "neon") return neon_table();
  return nullptr;
}

std::vector<std::string> available_tables() {
  std::vector<std::string> names = {"scalar"};
  if (cpu_has_avx2() && avx2_table()) names.push_back("avx2");
  if (neon_table()) names.push_back("neon");
  return names;
}

}  // namespace teco::kern
