#pragma once
// Data-parallel inner loops used by the tensor engine, the Chamfer scans
// and the optimizer. Every kernel exists in a scalar reference form and,
// on x86-64, an AVX2 form. Both forms follow the same accumulation-order
// contract, so they produce bit-identical results; the test suite asserts
// exact equality between backends.
//
// Reduction contract: elements are accumulated in four stripes over the
// full 4-blocks (stripe l holds indices i == l mod 4), the stripes are
// combined as (s0+s2)+(s1+s3), and tail elements are added serially in
// index order. This matches the AVX2 horizontal-add sequence.

#include <cstddef>

namespace sfield::kernels {

struct KernelTable {
  // y[i] = a[i] op b[i]
  void (*add)(double* y, const double* a, const double* b, std::size_t n);
  void (*sub)(double* y, const double* a, const double* b, std::size_t n);
  void (*mul)(double* y, const double* a, const double* b, std::size_t n);
  void (*div)(double* y, const double* a, const double* b, std::size_t n);
  // y[i] = max(a[i], 0)
  void (*relu)(double* y, const double* a, std::size_t n);
  // y[i] = c * a[i]
  void (*scale)(double* y, const double* a, double c, std::size_t n);
  // y[i] += c * x[i]
  void (*axpy)(double* y, double c, const double* x, std::size_t n);
  // striped-stripe reductions, see contract above
  double (*sum)(const double* x, std::size_t n);
  double (*dot)(const double* x, const double* y, std::size_t n);
  // C[m x n] += A[m x k] * B[k x n], row-major. C must be pre-initialized.
  void (*matmul_acc)(double* c, const double* a, const double* b,
                     std::size_t m, std::size_t k, std::size_t n);
  // min over points of ((dx*dx + dy*dy) + dz*dz); xs/ys/zs are SoA arrays
  double (*min_sqdist3)(double px, double py, double pz, const double* xs,
                        const double* ys, const double* zs, std::size_t n);
  // out[c] = (w00*f00[c] + w01*f01[c]) + (w10*f10[c] + w11*f11[c])
  void (*lerp4)(double* out, const double* f00, const double* f01,
                const double* f10, const double* f11, double w00, double w01,
                double w10, double w11, std::size_t n);
  // decoupled-weight-decay Adam update; inv_bc1/inv_bc2 are the
  // precomputed bias corrections 1/(1-beta^t)
  void (*adamw)(double* p, double* m, double* v, const double* g,
                std::size_t n, double lr, double beta1, double beta2,
                double eps, double wd, double inv_bc1, double inv_bc2);

  const char* name;
};

// The scalar reference table; always available.
const KernelTable& scalar_table();

// AVX2 table, or nullptr when unsupported by the build or the CPU.
const KernelTable* avx2_table();

// Active table. Selection order: SCENEFIELD_KERNELS env var
// ("scalar" | "avx2" | "auto"), then runtime CPU detection, then scalar.
// Requesting avx2 on a CPU without it falls back to scalar with a warning.
const KernelTable& active();

// Force a backend (tests). Returns false if the backend is unavailable.
bool select(const char* name);

}  // namespace sfield::kernels
