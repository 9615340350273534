#pragma once

#include <cstddef>

// Dense f64 kernels behind the tensor/autodiff layer. Every entry point has a
// scalar reference implementation plus SIMD variants (AVX2 on x86-64, NEON on
// aarch64) selected once at startup from CPU features. The scalar table is the
// semantic reference: SIMD variants are equivalence-tested against it
// (bit-exact for add/sub/mul/scale, tight relative tolerance for axpy,
// reductions and matmuls where FMA contraction or accumulation order differ).
namespace dag::kernels {

struct KernelTable {
  const char* name;

  // out[i] = a[i] (op) b[i]
  void (*add)(const double* a, const double* b, double* out, std::size_t n);
  void (*sub)(const double* a, const double* b, double* out, std::size_t n);
  void (*mul)(const double* a, const double* b, double* out, std::size_t n);
  // out[i] = c * x[i]
  void (*scale)(double c, const double* x, double* out, std::size_t n);
  // y[i] += c * x[i]
  void (*axpy)(double c, const double* x, double* y, std::size_t n);

  double (*dot)(const double* a, const double* b, std::size_t n);
  double (*sum)(const double* x, std::size_t n);

  // Row-major GEMMs. C is m x n; `accumulate` selects += vs =.
  //   gemm_nn: C (+)= A[m,k] * B[k,n]
  //   gemm_tn: C (+)= A^T,  A[k,m], B[k,n]
  //   gemm_nt: C (+)= A[m,k] * B^T, B[n,k]
  void (*gemm_nn)(const double* a, const double* b, double* c, std::size_t m,
                  std::size_t k, std::size_t n, bool accumulate);
  void (*gemm_tn)(const double* a, const double* b, double* c, std::size_t m,
                  std::size_t k, std::size_t n, bool accumulate);
  void (*gemm_nt)(const double* a, const double* b, double* c, std::size_t m,
                  std::size_t k, std::size_t n, bool accumulate);
};

const KernelTable& scalar();

// Non-null only when the TU was compiled in and the CPU supports the ISA.
const KernelTable* avx2();
const KernelTable* neon();

// Selected table: best available ISA, overridable with DAG_KERNELS=scalar
// (or avx2/neon) in the environment. The choice is made once per process.
const KernelTable& active();

}  // namespace dag::kernels
