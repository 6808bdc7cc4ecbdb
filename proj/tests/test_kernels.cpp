#include <array>
#include <cstring>
#include <vector>

#include "doctest.h"
#include "sfield/kernels.hpp"
#include "sfield/rng.hpp"

using namespace sfield;

namespace {

std::vector<double> random_vec(Rng& rng, std::size_t n, double lo = -2.0,
                               double hi = 2.0) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.uniform(lo, hi);
  return v;
}

bool bitwise_equal(const std::vector<double>& a, const std::vector<double>& b) {
  return a.size() == b.size() &&
         std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

}  // namespace

// Every kernel must produce bit-identical results on both backends; the
// sizes include non-multiple-of-4 tails.
TEST_CASE("scalar and avx2 backends are bit-identical") {
  const kernels::KernelTable& s = kernels::scalar_table();
  const kernels::KernelTable* a = kernels::avx2_table();
  if (!a) {
    MESSAGE("avx2 backend not built on this platform; skipping");
    return;
  }
  Rng rng(7);
  for (std::size_t n : {1u, 3u, 4u, 7u, 64u, 257u}) {
    auto x = random_vec(rng, n);
    auto y = random_vec(rng, n, 0.5, 3.0);
    std::vector<double> r1(n), r2(n);

    s.add(r1.data(), x.data(), y.data(), n);
    a->add(r2.data(), x.data(), y.data(), n);
    CHECK(bitwise_equal(r1, r2));

    s.sub(r1.data(), x.data(), y.data(), n);
    a->sub(r2.data(), x.data(), y.data(), n);
    CHECK(bitwise_equal(r1, r2));

    s.mul(r1.data(), x.data(), y.data(), n);
    a->mul(r2.data(), x.data(), y.data(), n);
    CHECK(bitwise_equal(r1, r2));

    s.div(r1.data(), x.data(), y.data(), n);
    a->div(r2.data(), x.data(), y.data(), n);
    CHECK(bitwise_equal(r1, r2));

    s.relu(r1.data(), x.data(), n);
    a->relu(r2.data(), x.data(), n);
    CHECK(bitwise_equal(r1, r2));

    s.scale(r1.data(), x.data(), 1.7, n);
    a->scale(r2.data(), x.data(), 1.7, n);
    CHECK(bitwise_equal(r1, r2));

    r1 = y;
    r2 = y;
    s.axpy(r1.data(), -0.3, x.data(), n);
    a->axpy(r2.data(), -0.3, x.data(), n);
    CHECK(bitwise_equal(r1, r2));

    CHECK(s.sum(x.data(), n) == a->sum(x.data(), n));
    CHECK(s.dot(x.data(), y.data(), n) == a->dot(x.data(), y.data(), n));
  }
}

TEST_CASE("matmul backends are bit-identical") {
  const kernels::KernelTable& s = kernels::scalar_table();
  const kernels::KernelTable* a = kernels::avx2_table();
  if (!a) return;
  Rng rng(11);
  for (auto [m, k, n] : std::vector<std::array<int, 3>>{
           {1, 1, 1}, {3, 5, 7}, {8, 8, 8}, {13, 21, 6}}) {
    auto x = random_vec(rng, m * k);
    auto y = random_vec(rng, k * n);
    std::vector<double> c1(m * n, 0.0), c2(m * n, 0.0);
    s.matmul_acc(c1.data(), x.data(), y.data(), m, k, n);
    a->matmul_acc(c2.data(), x.data(), y.data(), m, k, n);
    CHECK(bitwise_equal(c1, c2));
  }
}

TEST_CASE("min_sqdist3, lerp4 and adamw backends are bit-identical") {
  const kernels::KernelTable& s = kernels::scalar_table();
  const kernels::KernelTable* a = kernels::avx2_table();
  if (!a) return;
  Rng rng(13);
  for (std::size_t n : {1u, 5u, 16u, 111u}) {
    auto xs = random_vec(rng, n), ys = random_vec(rng, n),
         zs = random_vec(rng, n);
    const double v1 = s.min_sqdist3(0.1, -0.2, 0.3, xs.data(), ys.data(),
                                    zs.data(), n);
    const double v2 = a->min_sqdist3(0.1, -0.2, 0.3, xs.data(), ys.data(),
                                     zs.data(), n);
    CHECK(v1 == v2);

    auto f00 = random_vec(rng, n), f01 = random_vec(rng, n),
         f10 = random_vec(rng, n), f11 = random_vec(rng, n);
    std::vector<double> o1(n), o2(n);
    s.lerp4(o1.data(), f00.data(), f01.data(), f10.data(), f11.data(), 0.2,
            0.3, 0.1, 0.4, n);
    a->lerp4(o2.data(), f00.data(), f01.data(), f10.data(), f11.data(), 0.2,
             0.3, 0.1, 0.4, n);
    CHECK(bitwise_equal(o1, o2));

    auto p1 = random_vec(rng, n), g = random_vec(rng, n);
    auto m1 = random_vec(rng, n, 0.0, 1.0), vv1 = random_vec(rng, n, 0.0, 1.0);
    auto p2 = p1, m2 = m1, vv2 = vv1;
    s.adamw(p1.data(), m1.data(), vv1.data(), g.data(), n, 1e-3, 0.9, 0.999,
            1e-8, 0.01, 1.1, 1.05);
    a->adamw(p2.data(), m2.data(), vv2.data(), g.data(), n, 1e-3, 0.9, 0.999,
             1e-8, 0.01, 1.1, 1.05);
    CHECK(bitwise_equal(p1, p2));
    CHECK(bitwise_equal(m1, m2));
    CHECK(bitwise_equal(vv1, vv2));
  }
}

TEST_CASE("backend selection") {
  CHECK(kernels::select("scalar"));
  CHECK(std::string(kernels::active().name) == "scalar");
  CHECK_FALSE(kernels::select("neon"));
  CHECK(kernels::select("auto"));
}
