#pragma once

#include <cstddef>
#include <string_view>

// Inner-loop arithmetic behind the tape ops and k-means. Every kernel has a
// portable scalar reference; SIMD variants are selected once at runtime and
// are checked against the reference in tests/unit/kernels_test.cpp.
namespace gdml::kernels {

struct KernelSet {
  const char* name;
  double (*dot)(const double* a, const double* b, std::size_t n);
  // y += alpha * x
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
  double (*sq_dist)(const double* a, const double* b, std::size_t n);
  // C[m x n] += A[m x k] * B[k x n]
  void (*gemm_nn)(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c);
  // C[m x n] += A[m x k] * B[n x k]^T
  void (*gemm_nt)(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c);
  // C[m x n] += A[k x m]^T * B[k x n]
  void (*gemm_tn)(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c);
};

const KernelSet& scalar();
// nullptr when the binary was built without the variant.
const KernelSet* avx2();
bool avx2_supported() noexcept;

// Chosen on first call: GDML_KERNELS=scalar|avx2|auto (default auto).
const KernelSet& active();
// Overrides the active set; throws ConfigError for unknown or unsupported names.
void select(std::string_view name);

}  // namespace gdml::kernels
