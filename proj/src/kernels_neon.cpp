// NEON variants, 2 f64 lanes per vector. Same structure as the AVX2 table.

#include "dag/kernels.hpp"

#if defined(__aarch64__) || defined(_M_ARM64)
#include <arm_neon.h>

#include <cstring>

namespace dag::kernels {
namespace {

void add_neon(const double* a, const double* b, double* out, std::size_t n) {
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) {
    vst1q_f64(out + i, vaddq_f64(vld1q_f64(a + i), vld1q_f64(b + i)));
  }
  for (; i < n; ++i) out[i] = a[i] + b[i];
}

void sub_neon(const double* a, const double* b, double* out, std::size_t n) {
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) {
    vst1q_f64(out + i, vsubq_f64(vld1q_f64(a + i), vld1q_f64(b + i)));
  }
  for (; i < n; ++i) out[i] = a[i] - b[i];
}

void mul_neon(const double* a, const double* b, double* out, std::size_t n) {
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) {
    vst1q_f64(out + i, vmulq_f64(vld1q_f64(a + i), vld1q_f64(b + i)));
  }
  for (; i < n; ++i) out[i] = a[i] * b[i];
}

void scale_neon(double c, const double* x, double* out, std::size_t n) {
  const float64x2_t cv = vdupq_n_f64(c);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) {
    vst1q_f64(out + i, vmulq_f64(cv, vld1q_f64(x + i)));
  }
  for (; i < n; ++i) out[i] = c * x[i];
}

void axpy_neon(double c, const double* x, double* y, std::size_t n) {
  const float64x2_t cv = vdupq_n_f64(c);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) {
    vst1q_f64(y + i, vfmaq_f64(vld1q_f64(y + i), cv, vld1q_f64(x + i)));
  }
  for (; i < n; ++i) y[i] += c * x[i];
}

double dot_neon(const double* a, const double* b, std::size_t n) {
  float64x2_t acc0 = vdupq_n_f64(0.0);
  float64x2_t acc1 = vdupq_n_f64(0.0);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    acc0 = vfmaq_f64(acc0, vld1q_f64(a + i), vld1q_f64(b + i));
    acc1 = vfmaq_f64(acc1, vld1q_f64(a + i + 2), vld1q_f64(b + i + 2));
  }
  for (; i + 2 <= n; i += 2) {
    acc0 = vfmaq_f64(acc0, vld1q_f64(a + i), vld1q_f64(b + i));
  }
  double acc = vaddvq_f64(vaddq_f64(acc0, acc1));
  for (; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

double sum_neon(const double* x, std::size_t n) {
  float64x2_t acc0 = vdupq_n_f64(0.0);
  float64x2_t acc1 = vdupq_n_f64(0.0);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    acc0 = vaddq_f64(acc0, vld1q_f64(x + i));
    acc1 = vaddq_f64(acc1, vld1q_f64(x + i + 2));
  }
  for (; i + 2 <= n; i += 2) acc0 = vaddq_f64(acc0, vld1q_f64(x + i));
  double acc = vaddvq_f64(vaddq_f64(acc0, acc1));
  for (; i < n; ++i) acc += x[i];
  return acc;
}

void gemm_nn_neon(const double* a, const double* b, double* c, std::size_t m,
                  std::size_t k, std::size_t n, bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = c + i * n;
    if (!accumulate) std::memset(crow, 0, n * sizeof(double));
    const double* arow = a + i * k;
    for (std::size_t kk = 0; kk < k; ++kk) {
      const float64x2_t aik = vdupq_n_f64(arow[kk]);
      const double* brow = b + kk * n;
      std::size_t j = 0;
      for (; j + 4 <= n; j += 4) {
        vst1q_f64(crow + j,
                  vfmaq_f64(vld1q_f64(crow + j), aik, vld1q_f64(brow + j)));
        vst1q_f64(crow + j + 2, vfmaq_f64(vld1q_f64(crow + j + 2), aik,
                                          vld1q_f64(brow + j + 2)));
      }
      for (; j + 2 <= n; j += 2) {
        vst1q_f64(crow + j,
                  vfmaq_f64(vld1q_f64(crow + j), aik, vld1q_f64(brow + j)));
      }
      for (; j < n; ++j) crow[j] += arow[kk] * brow[j];
    }
  }
}

void gemm_tn_neon(const double* a, const double* b, double* c, std::size_t m,
                  std::size_t k, std::size_t n, bool accumulate) {
  if (!accumulate) std::memset(c, 0, m * n * sizeof(double));
  for (std::size_t kk = 0; kk < k; ++kk) {
    const double* arow = a + kk * m;
    const double* brow = b + kk * n;
    for (std::size_t i = 0; i < m; ++i) {
      const float64x2_t aki = vdupq_n_f64(arow[i]);
      double* crow = c + i * n;
      std::size_t j = 0;
      for (; j + 2 <= n; j += 2) {
        vst1q_f64(crow + j,
                  vfmaq_f64(vld1q_f64(crow + j), aki, vld1q_f64(brow + j)));
      }
      for (; j < n; ++j) crow[j] += arow[i] * brow[j];
    }
  }
}

void gemm_nt_neon(const double* a, const double* b, double* c, std::size_t m,
                  std::size_t k, std::size_t n, bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    double* crow = c + i * n;
    for (std::size_t j = 0; j < n; ++j) {
      const double d = dot_neon(arow, b + j * k, k);
      if (accumulate) {
        crow[j] += d;
      } else {
        crow[j] = d;
      }
    }
  }
}

const KernelTable kNeonTable = {
    "neon",       add_neon,     sub_neon,     mul_neon,
    scale_neon,   axpy_neon,    dot_neon,     sum_neon,
    gemm_nn_neon, gemm_tn_neon, gemm_nt_neon,
};

}  // namespace

const KernelTable* neon_table_if_supported() { return &kNeonTable; }

}  // namespace dag::kernels

#endif  // aarch64
