#include <atomic>
#include <cstdlib>
#include <string>

#include "gdml/error.hpp"
#include "kernels_impl.hpp"

namespace gdml::kernels {

namespace {

const KernelSet kScalar{
    "scalar",
    detail::dot_scalar,
    detail::axpy_scalar,
    detail::sq_dist_scalar,
    detail::gemm_nn_scalar,
    detail::gemm_nt_scalar,
    detail::gemm_tn_scalar,
};

#if defined(GDML_HAVE_AVX2)
const KernelSet kAvx2{
    "avx2",
    detail::dot_avx2,
    detail::axpy_avx2,
    detail::sq_dist_avx2,
    detail::gemm_nn_avx2,
    detail::gemm_nt_avx2,
    detail::gemm_tn_avx2,
};
#endif

const KernelSet* resolve(std::string_view name) {
  if (name == "scalar") return &kScalar;
  if (name == "avx2") {
    if (!avx2() || !avx2_supported()) throw ConfigError("avx2 kernels requested but unavailable on this CPU/build");
    return avx2();
  }
  if (name == "auto" || name.empty()) return (avx2() && avx2_supported()) ? avx2() : &kScalar;
  throw ConfigError("unknown kernel set '" + std::string(name) + "' (expected scalar, avx2 or auto)");
}

std::atomic<const KernelSet*>& slot() {
  static std::atomic<const KernelSet*> current{nullptr};
  return current;
}

}  // namespace

const KernelSet& scalar() { return kScalar; }

const KernelSet* avx2() {
#if defined(GDML_HAVE_AVX2)
  return &kAvx2;
#else
  return nullptr;
#endif
}

bool avx2_supported() noexcept {
#if defined(GDML_HAVE_AVX2) && (defined(__GNUC__) || defined(__clang__))
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

const KernelSet& active() {
  const KernelSet* k = slot().load(std::memory_order_acquire);
  if (!k) {
    const char* env = std::getenv("GDML_KERNELS");
    k = resolve(env ? env : "auto");
    slot().store(k, std::memory_order_release);
  }
  return *k;
}

void select(std::string_view name) { slot().store(resolve(name), std::memory_order_release); }

}  // namespace gdml::kernels
