#include "sfield/kernels.hpp"

#include <cmath>

// Reference implementations. Loops are written to mirror the AVX2
// operation order exactly; see the contract in kernels.hpp.

namespace sfield::kernels {
namespace {

void add_scalar(double* y, const double* a, const double* b, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] = a[i] + b[i];
}

void sub_scalar(double* y, const double* a, const double* b, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] = a[i] - b[i];
}

void mul_scalar(double* y, const double* a, const double* b, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] = a[i] * b[i];
}

void div_scalar(double* y, const double* a, const double* b, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] = a[i] / b[i];
}

void relu_scalar(double* y, const double* a, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] = a[i] > 0.0 ? a[i] : 0.0;
}

void scale_scalar(double* y, const double* a, double c, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] = c * a[i];
}

void axpy_scalar(double* y, double c, const double* x, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] = y[i] + c * x[i];
}

double sum_scalar(const double* x, std::size_t n) {
  const std::size_t nblk = n / 4 * 4;
  double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
  for (std::size_t i = 0; i < nblk; i += 4) {
    s0 += x[i];
    s1 += x[i + 1];
    s2 += x[i + 2];
    s3 += x[i + 3];
  }
  double total = (s0 + s2) + (s1 + s3);
  for (std::size_t i = nblk; i < n; ++i) total += x[i];
  return total;
}

double dot_scalar(const double* x, const double* y, std::size_t n) {
  const std::size_t nblk = n / 4 * 4;
  double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
  for (std::size_t i = 0; i < nblk; i += 4) {
    s0 += x[i] * y[i];
    s1 += x[i + 1] * y[i + 1];
    s2 += x[i + 2] * y[i + 2];
    s3 += x[i + 3] * y[i + 3];
  }
  double total = (s0 + s2) + (s1 + s3);
  for (std::size_t i = nblk; i < n; ++i) total += x[i] * y[i];
  return total;
}

void matmul_acc_scalar(double* c, const double* a, const double* b,
                       std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = c + i * n;
    for (std::size_t l = 0; l < k; ++l) {
      const double aik = a[i * k + l];
      const double* brow = b + l * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += aik * brow[j];
    }
  }
}

double min_sqdist3_scalar(double px, double py, double pz, const double* xs,
                          const double* ys, const double* zs, std::size_t n) {
  double best = HUGE_VAL;
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = px - xs[i];
    const double dy = py - ys[i];
    const double dz = pz - zs[i];
    const double d = (dx * dx + dy * dy) + dz * dz;
    if (d < best) best = d;
  }
  return best;
}

void lerp4_scalar(double* out, const double* f00, const double* f01,
                  const double* f10, const double* f11, double w00, double w01,
                  double w10, double w11, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i)
    out[i] = (w00 * f00[i] + w01 * f01[i]) + (w10 * f10[i] + w11 * f11[i]);
}

void adamw_scalar(double* p, double* m, double* v, const double* g,
                  std::size_t n, double lr, double beta1, double beta2,
                  double eps, double wd, double inv_bc1, double inv_bc2) {
  for (std::size_t i = 0; i < n; ++i) {
    m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
    v[i] = beta2 * v[i] + (1.0 - beta2) * (g[i] * g[i]);
    const double mhat = m[i] * inv_bc1;
    const double vhat = v[i] * inv_bc2;
    const double update = mhat / (std::sqrt(vhat) + eps) + wd * p[i];
    p[i] = p[i] - lr * update;
  }
}

}  // namespace

const KernelTable& scalar_table() {
  static const KernelTable table = {
      add_scalar,   sub_scalar,        mul_scalar,   div_scalar,
      relu_scalar,  scale_scalar,      axpy_scalar,  sum_scalar,
      dot_scalar,   matmul_acc_scalar, min_sqdist3_scalar,
      lerp4_scalar, adamw_scalar,      "scalar"};
  return table;
}

}  // namespace sfield::kernels
