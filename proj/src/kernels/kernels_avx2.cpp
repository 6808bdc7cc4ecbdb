#include "sfield/kernels.hpp"

// AVX2 variants. Compiled with -mavx2 (no FMA: fused multiply-add would
// round differently from the scalar reference). Horizontal reductions
// combine lanes as (s0+s2)+(s1+s3) to match the scalar contract.

#if defined(__x86_64__) || defined(_M_X64)
#define SFIELD_HAVE_AVX2_BUILD 1
#include <immintrin.h>

#include <cmath>
#else
#define SFIELD_HAVE_AVX2_BUILD 0
#endif

namespace sfield::kernels {

#if SFIELD_HAVE_AVX2_BUILD

namespace {

inline double hsum4(__m256d acc) {
  // lanes (s0,s1,s2,s3) -> (s0+s2, s1+s3) -> (s0+s2)+(s1+s3)
  __m128d lo = _mm256_castpd256_pd128(acc);
  __m128d hi = _mm256_extractf128_pd(acc, 1);
  __m128d pair = _mm_add_pd(lo, hi);
  __m128d shuf = _mm_unpackhi_pd(pair, pair);
  return _mm_cvtsd_f64(_mm_add_sd(pair, shuf));
}

void add_avx2(double* y, const double* a, const double* b, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(y + i, _mm256_add_pd(_mm256_loadu_pd(a + i),
                                          _mm256_loadu_pd(b + i)));
  for (; i < n; ++i) y[i] = a[i] + b[i];
}

void sub_avx2(double* y, const double* a, const double* b, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(y + i, _mm256_sub_pd(_mm256_loadu_pd(a + i),
                                          _mm256_loadu_pd(b + i)));
  for (; i < n; ++i) y[i] = a[i] - b[i];
}

void mul_avx2(double* y, const double* a, const double* b, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(y + i, _mm256_mul_pd(_mm256_loadu_pd(a + i),
                                          _mm256_loadu_pd(b + i)));
  for (; i < n; ++i) y[i] = a[i] * b[i];
}

void div_avx2(double* y, const double* a, const double* b, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(y + i, _mm256_div_pd(_mm256_loadu_pd(a + i),
                                          _mm256_loadu_pd(b + i)));
  for (; i < n; ++i) y[i] = a[i] / b[i];
}

void relu_avx2(double* y, const double* a, std::size_t n) {
  const __m256d zero = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d x = _mm256_loadu_pd(a + i);
    __m256d mask = _mm256_cmp_pd(x, zero, _CMP_GT_OQ);
    _mm256_storeu_pd(y + i, _mm256_and_pd(x, mask));
  }
  for (; i < n; ++i) y[i] = a[i] > 0.0 ? a[i] : 0.0;
}

void scale_avx2(double* y, const double* a, double c, std::size_t n) {
  const __m256d vc = _mm256_set1_pd(c);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(y + i, _mm256_mul_pd(vc, _mm256_loadu_pd(a + i)));
  for (; i < n; ++i) y[i] = c * a[i];
}

void axpy_avx2(double* y, double c, const double* x, std::size_t n) {
  const __m256d vc = _mm256_set1_pd(c);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d prod = _mm256_mul_pd(vc, _mm256_loadu_pd(x + i));
    _mm256_storeu_pd(y + i, _mm256_add_pd(_mm256_loadu_pd(y + i), prod));
  }
  for (; i < n; ++i) y[i] = y[i] + c * x[i];
}

double sum_avx2(const double* x, std::size_t n) {
  const std::size_t nblk = n / 4 * 4;
  __m256d acc = _mm256_setzero_pd();
  for (std::size_t i = 0; i < nblk; i += 4)
    acc = _mm256_add_pd(acc, _mm256_loadu_pd(x + i));
  double total = hsum4(acc);
  for (std::size_t i = nblk; i < n; ++i) total += x[i];
  return total;
}

double dot_avx2(const double* x, const double* y, std::size_t n) {
  const std::size_t nblk = n / 4 * 4;
  __m256d acc = _mm256_setzero_pd();
  for (std::size_t i = 0; i < nblk; i += 4) {
    __m256d prod = _mm256_mul_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i));
    acc = _mm256_add_pd(acc, prod);
  }
  double total = hsum4(acc);
  for (std::size_t i = nblk; i < n; ++i) total += x[i] * y[i];
  return total;
}

void matmul_acc_avx2(double* c, const double* a, const double* b,
                     std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = c + i * n;
    for (std::size_t l = 0; l < k; ++l) {
      const __m256d va = _mm256_set1_pd(a[i * k + l]);
      const double* brow = b + l * n;
      std::size_t j = 0;
      for (; j + 4 <= n; j += 4) {
        __m256d prod = _mm256_mul_pd(va, _mm256_loadu_pd(brow + j));
        _mm256_storeu_pd(crow + j,
                         _mm256_add_pd(_mm256_loadu_pd(crow + j), prod));
      }
      const double aik = a[i * k + l];
      for (; j < n; ++j) crow[j] += aik * brow[j];
    }
  }
}

double min_sqdist3_avx2(double px, double py, double pz, const double* xs,
                        const double* ys, const double* zs, std::size_t n) {
  const __m256d vx = _mm256_set1_pd(px);
  const __m256d vy = _mm256_set1_pd(py);
  const __m256d vz = _mm256_set1_pd(pz);
  __m256d vbest = _mm256_set1_pd(HUGE_VAL);
  const std::size_t nblk = n / 4 * 4;
  for (std::size_t i = 0; i < nblk; i += 4) {
    __m256d dx = _mm256_sub_pd(vx, _mm256_loadu_pd(xs + i));
    __m256d dy = _mm256_sub_pd(vy, _mm256_loadu_pd(ys + i));
    __m256d dz = _mm256_sub_pd(vz, _mm256_loadu_pd(zs + i));
    __m256d d = _mm256_add_pd(
        _mm256_add_pd(_mm256_mul_pd(dx, dx), _mm256_mul_pd(dy, dy)),
        _mm256_mul_pd(dz, dz));
    vbest = _mm256_min_pd(vbest, d);
  }
  double lanes[4];
  _mm256_storeu_pd(lanes, vbest);
  double best = lanes[0];
  for (int l = 1; l < 4; ++l)
    if (lanes[l] < best) best = lanes[l];
  for (std::size_t i = nblk; i < n; ++i) {
    const double dx = px - xs[i];
    const double dy = py - ys[i];
    const double dz = pz - zs[i];
    const double d = (dx * dx + dy * dy) + dz * dz;
    if (d < best) best = d;
  }
  return best;
}

void lerp4_avx2(double* out, const double* f00, const double* f01,
                const double* f10, const double* f11, double w00, double w01,
                double w10, double w11, std::size_t n) {
  const __m256d v00 = _mm256_set1_pd(w00);
  const __m256d v01 = _mm256_set1_pd(w01);
  const __m256d v10 = _mm256_set1_pd(w10);
  const __m256d v11 = _mm256_set1_pd(w11);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d lo = _mm256_add_pd(_mm256_mul_pd(v00, _mm256_loadu_pd(f00 + i)),
                               _mm256_mul_pd(v01, _mm256_loadu_pd(f01 + i)));
    __m256d hi = _mm256_add_pd(_mm256_mul_pd(v10, _mm256_loadu_pd(f10 + i)),
                               _mm256_mul_pd(v11, _mm256_loadu_pd(f11 + i)));
    _mm256_storeu_pd(out + i, _mm256_add_pd(lo, hi));
  }
  for (; i < n; ++i)
    out[i] = (w00 * f00[i] + w01 * f01[i]) + (w10 * f10[i] + w11 * f11[i]);
}

void adamw_avx2(double* p, double* m, double* v, const double* g,
                std::size_t n, double lr, double beta1, double beta2,
                double eps, double wd, double inv_bc1, double inv_bc2) {
  const __m256d vb1 = _mm256_set1_pd(beta1);
  const __m256d vb1c = _mm256_set1_pd(1.0 - beta1);
  const __m256d vb2 = _mm256_set1_pd(beta2);
  const __m256d vb2c = _mm256_set1_pd(1.0 - beta2);
  const __m256d vbc1 = _mm256_set1_pd(inv_bc1);
  const __m256d vbc2 = _mm256_set1_pd(inv_bc2);
  const __m256d veps = _mm256_set1_pd(eps);
  const __m256d vwd = _mm256_set1_pd(wd);
  const __m256d vlr = _mm256_set1_pd(lr);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d gi = _mm256_loadu_pd(g + i);
    __m256d mi = _mm256_add_pd(_mm256_mul_pd(vb1, _mm256_loadu_pd(m + i)),
                               _mm256_mul_pd(vb1c, gi));
    __m256d vi = _mm256_add_pd(_mm256_mul_pd(vb2, _mm256_loadu_pd(v + i)),
                               _mm256_mul_pd(vb2c, _mm256_mul_pd(gi, gi)));
    _mm256_storeu_pd(m + i, mi);
    _mm256_storeu_pd(v + i, vi);
    __m256d mhat = _mm256_mul_pd(mi, vbc1);
    __m256d vhat = _mm256_mul_pd(vi, vbc2);
    __m256d denom = _mm256_add_pd(_mm256_sqrt_pd(vhat), veps);
    __m256d pi = _mm256_loadu_pd(p + i);
    __m256d update =
        _mm256_add_pd(_mm256_div_pd(mhat, denom), _mm256_mul_pd(vwd, pi));
    _mm256_storeu_pd(p + i, _mm256_sub_pd(pi, _mm256_mul_pd(vlr, update)));
  }
  for (; i < n; ++i) {
    m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
    v[i] = beta2 * v[i] + (1.0 - beta2) * (g[i] * g[i]);
    const double mhat = m[i] * inv_bc1;
    const double vhat = v[i] * inv_bc2;
    const double update = mhat / (std::sqrt(vhat) + eps) + wd * p[i];
    p[i] = p[i] - lr * update;
  }
}

}  // namespace

const KernelTable* avx2_table() {
  static const KernelTable table = {
      add_avx2,   sub_avx2,        mul_avx2,   div_avx2,
      relu_avx2,  scale_avx2,      axpy_avx2,  sum_avx2,
      dot_avx2,   matmul_acc_avx2, min_sqdist3_avx2,
      lerp4_avx2, adamw_avx2,      "avx2"};
  return &table;
}

#else

const KernelTable* avx2_table() { return nullptr; }

#endif

}  // namespace sfield::kernels
