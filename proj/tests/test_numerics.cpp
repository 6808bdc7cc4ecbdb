#include <cmath>
#include <cstring>
#include <string>

#include "doctest.h"
#include "sfield/gradcheck.hpp"
#include "sfield/optim.hpp"
#include "sfield/rng.hpp"
#include "sfield/tape.hpp"

using namespace sfield;

namespace {

Tensor random_tensor(Rng& rng, std::vector<int> shape, double lo = -2.0,
                     double hi = 2.0) {
  Tensor t(std::move(shape));
  for (std::int64_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(lo, hi);
  return t;
}

// random values bounded away from zero (avoids kinks of relu/abs/min/max
// within the finite-difference step)
Tensor random_away_from_zero(Rng& rng, std::vector<int> shape) {
  Tensor t(std::move(shape));
  for (std::int64_t i = 0; i < t.size(); ++i) {
    const double mag = rng.uniform(0.1, 2.0);
    t[i] = rng.uniform() < 0.5 ? -mag : mag;
  }
  return t;
}

template <typename Fn>
std::string capture_error(Fn&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.what();
  }
  return {};
}

}  // namespace

TEST_CASE("forward examples") {
  Rng rng(1);
  Tape t;

  SUBCASE("matmul by identity") {
    Tensor eye({3, 3});
    for (int i = 0; i < 3; ++i) eye[i * 3 + i] = 1.0;
    Tensor a = random_tensor(rng, {3, 3});
    Value r = matmul(t.input(eye), t.input(a));
    for (int i = 0; i < 9; ++i) CHECK(t.value(r)[i] == doctest::Approx(a[i]));
  }

  SUBCASE("softmax of a constant row is uniform") {
    Value r = softmax(t.input(Tensor({3}, {0.0, 0.0, 0.0})));
    for (int i = 0; i < 3; ++i)
      CHECK(t.value(r)[i] == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
  }

  SUBCASE("matmul matches a triple-loop oracle") {
    Tensor a = random_tensor(rng, {4, 4}), b = random_tensor(rng, {4, 4});
    Value r = matmul(t.input(a), t.input(b));
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 4; ++j) {
        double acc = 0.0;
        for (int k = 0; k < 4; ++k) acc += a[i * 4 + k] * b[k * 4 + j];
        CHECK(std::fabs(t.value(r)[i * 4 + j] - acc) < 1e-12);
      }
  }

  SUBCASE("layer_norm of a constant vector is zero") {
    Value r = layer_norm(t.input(Tensor::full({5}, 3.25)));
    for (int i = 0; i < 5; ++i) CHECK(t.value(r)[i] == 0.0);
  }

  SUBCASE("softmax rows are probability vectors") {
    Tensor x = random_tensor(rng, {6, 9}, -30.0, 30.0);
    Value r = softmax(t.input(x));
    for (int i = 0; i < 6; ++i) {
      double s = 0.0;
      for (int j = 0; j < 9; ++j) {
        CHECK(t.value(r)[i * 9 + j] >= 0.0);
        s += t.value(r)[i * 9 + j];
      }
      CHECK(std::fabs(s - 1.0) <= 1e-12);
    }
  }
}

TEST_CASE("error reporting") {
  Tape t;
  Value a = t.input(Tensor({2, 3}));
  Value b = t.input(Tensor({3, 2}));
  const std::string msg = capture_error([&] { add(a, b); });
  CHECK(msg.find("[2x3]") != std::string::npos);
  CHECK(msg.find("[3x2]") != std::string::npos);

  CHECK_THROWS_AS(log(t.input(Tensor({2}, {1.0, 0.0}))), Error);
  CHECK_THROWS_AS(t.backward(a), Error);  // non-scalar root
}

TEST_CASE("backward basics") {
  SUBCASE("sum gives all-ones gradient") {
    Tape t;
    Value x = t.input(Tensor({2, 3, 2}, std::vector<double>(12, 0.5)));
    Value y = sum(x);
    t.backward(y);
    for (int i = 0; i < 12; ++i) CHECK(t.grad(x)[i] == 1.0);
  }

  SUBCASE("d(x*x)/dx at 3 is 6") {
    Tape t;
    Value x = t.input(Tensor::scalar(3.0));
    Value y = sum(mul(x, x));
    t.backward(y);
    CHECK(t.grad(x)[0] == doctest::Approx(6.0));
  }

  SUBCASE("unreached parameters get zero gradients") {
    Tape t;
    Value x = t.input(Tensor::scalar(1.0));
    Value unused = t.input(Tensor({4}));
    t.backward(sum(x));
    for (int i = 0; i < 4; ++i) CHECK(t.grad(unused)[i] == 0.0);
  }
}

TEST_CASE("two-layer MLP gradients match finite differences") {
  Rng rng(5);
  const Tensor in = random_tensor(rng, {1, 4});
  const Tensor w1 = random_tensor(rng, {4, 8}, -0.5, 0.5);
  const Tensor b1 = random_tensor(rng, {8}, -0.5, 0.5);
  const Tensor w2 = random_tensor(rng, {8, 1}, -0.5, 0.5);

  auto loss_wrt = [&](int which) {
    return [&, which](Tape& t, Value v) {
      Value iv = which == 0 ? v : t.constant(in);
      Value w1v = which == 1 ? v : t.constant(w1);
      Value b1v = which == 2 ? v : t.constant(b1);
      Value w2v = which == 3 ? v : t.constant(w2);
      Value h = relu(add_row(matmul(iv, w1v), b1v));
      return sum(sigmoid(matmul(h, w2v)));
    };
  };
  CHECK(gradient_check(loss_wrt(0), in, 1e-5) < 1e-5);
  CHECK(gradient_check(loss_wrt(1), w1, 1e-5) < 1e-5);
  CHECK(gradient_check(loss_wrt(2), b1, 1e-5) < 1e-5);
  CHECK(gradient_check(loss_wrt(3), w2, 1e-5) < 1e-5);
}

TEST_CASE("gradient_check harness") {
  Rng rng(9);

  SUBCASE("linear function is exact") {
    CHECK(gradient_check([](Tape&, Value x) { return sum(x); },
                         random_tensor(rng, {7}), 1e-5) < 1e-9);
  }

  SUBCASE("sigmoid of sum") {
    CHECK(gradient_check(
              [](Tape&, Value x) { return sigmoid(sum(x)); },
              random_tensor(rng, {5}, -0.4, 0.4), 1e-5) < 1e-6);
  }

  SUBCASE("rejects non-positive eps") {
    CHECK_THROWS_AS(gradient_check([](Tape&, Value x) { return sum(x); },
                                   Tensor({1}), 0.0),
                    Error);
  }

  SUBCASE("detects a wrong backward rule") {
    // identity forward, doubled backward
    struct Broken : CustomOp {
      const char* name() const override { return "broken"; }
      Tensor forward(const std::vector<const Tensor*>& in) override {
        return *in[0];
      }
      void backward(const Tensor& g, const std::vector<const Tensor*>&,
                    const Tensor&, const std::vector<Tensor*>& gi) override {
        for (std::int64_t i = 0; i < g.size(); ++i) (*gi[0])[i] += 2.0 * g[i];
      }
    };
    auto f = [](Tape& t, Value x) {
      return sum(t.custom(std::make_shared<Broken>(), {x}));
    };
    CHECK(gradient_check(f, random_tensor(rng, {4}), 1e-5) > 1e-2);
  }
}

// every differentiable operation kind, checked at random points
TEST_CASE("per-op gradient checks") {
  Rng rng(17);
  const double tol = 1e-5;
  for (int trial = 0; trial < 10; ++trial) {
    const Tensor x = random_away_from_zero(rng, {3, 4});
    const Tensor y = random_away_from_zero(rng, {3, 4});
    const Tensor row = random_away_from_zero(rng, {4});

    auto chk = [&](const ScalarFn& f, const Tensor& at) {
      CHECK(gradient_check(f, at, 1e-5) < tol);
    };

    chk([&](Tape& t, Value v) { return sum(add(v, t.constant(y))); }, x);
    chk([&](Tape& t, Value v) { return sum(sub(t.constant(y), v)); }, x);
    chk([&](Tape& t, Value v) { return sum(mul(v, t.constant(y))); }, x);
    chk([&](Tape& t, Value v) { return sum(div(t.constant(y), v)); }, x);
    chk([](Tape&, Value v) { return sum(neg(v)); }, x);
    chk([](Tape&, Value v) { return sum(scale(v, -1.7)); }, x);
    chk([](Tape&, Value v) { return sum(add_const(v, 0.3)); }, x);
    chk([](Tape&, Value v) { return sum(relu(v)); }, x);
    chk([](Tape&, Value v) { return sum(abs(v)); }, x);
    chk([&](Tape& t, Value v) { return sum(emin(v, t.constant(y))); }, x);
    chk([&](Tape& t, Value v) { return sum(emax(t.constant(y), v)); }, x);
    chk([](Tape&, Value v) { return sum(clamp(v, -50.0, 50.0)); }, x);
    chk([](Tape&, Value v) { return sum(sigmoid(v)); }, x);
    chk([](Tape&, Value v) { return sum(exp(v)); }, x);
    chk([](Tape&, Value v) { return sum(sin(v)); }, x);
    chk([](Tape&, Value v) { return sum(cos(v)); }, x);
    // a non-uniform weighting makes the softmax/layer_norm checks
    // non-trivial (an unweighted sum of a softmax row is constant)
    chk([&](Tape& t, Value v) {
      return sum(mul(softmax(v), t.constant(y)));
    }, x);
    chk([&](Tape& t, Value v) {
      return sum(mul(layer_norm(v), t.constant(y)));
    }, x);
    chk([&](Tape& t, Value v) {
      return sum(concat(v, t.constant(y), 1));
    }, x);
    chk([](Tape&, Value v) { return sum(slice(v, 1, 1, 2)); }, x);
    chk([](Tape&, Value v) { return sum(v); }, x);
    chk([](Tape&, Value v) { return mean(v); }, x);
    chk([&](Tape& t, Value v) { return l1_distance(v, t.constant(y)); }, x);
    chk([](Tape&, Value v) { return l2_norm(v); }, x);
    const Tensor right = random_tensor(rng, {4, 2});
    const Tensor left = random_tensor(rng, {2, 3});
    chk([&](Tape& t, Value v) { return sum(matmul(v, t.constant(right))); }, x);
    chk([&](Tape& t, Value v) { return sum(matmul(t.constant(left), v)); }, x);
    chk([](Tape&, Value v) { return sum(transpose(v)); }, x);
    chk([&](Tape& t, Value v) { return sum(add_row(v, t.constant(row))); }, x);
    chk([&](Tape& t, Value v) { return sum(mul_row(v, t.constant(row))); }, x);
    chk([&](Tape& t, Value v) { return sum(mul_row(t.constant(x), v)); }, row);
    {
      Tensor targets({3, 4});
      for (int i = 0; i < 12; ++i) targets[i] = rng.uniform(0.05, 0.95);
      chk([&](Tape& t, Value v) {
        return bce_logits(v, t.constant(targets));
      }, x);
    }
    chk([](Tape&, Value v) { return sum(reshape(v, {4, 3})); }, x);
    {
      const Tensor logx = random_tensor(rng, {3, 4}, 0.2, 3.0);
      chk([](Tape&, Value v) { return sum(log(v)); }, logx);
    }
  }
}

TEST_CASE("conv op gradient checks") {
  Rng rng(23);
  const Tensor x3 = random_tensor(rng, {2, 5, 5, 5}, -1.0, 1.0);
  const Tensor w3 = random_tensor(rng, {3, 2, 3, 3, 3}, -0.5, 0.5);
  const Tensor b3 = random_tensor(rng, {3}, -0.5, 0.5);
  auto conv_wrt = [&](int which) {
    return [&, which](Tape& t, Value v) {
      Value xv = which == 0 ? v : t.constant(x3);
      Value wv = which == 1 ? v : t.constant(w3);
      Value bv = which == 2 ? v : t.constant(b3);
      return sum(sigmoid(conv3d(xv, wv, bv, 2, 1)));
    };
  };
  CHECK(gradient_check(conv_wrt(0), x3, 1e-5) < 1e-5);
  CHECK(gradient_check(conv_wrt(1), w3, 1e-5) < 1e-5);
  CHECK(gradient_check(conv_wrt(2), b3, 1e-5) < 1e-5);

  const Tensor x2 = random_tensor(rng, {2, 3, 3}, -1.0, 1.0);
  const Tensor w2 = random_tensor(rng, {2, 3, 4, 4}, -0.5, 0.5);
  const Tensor b2 = random_tensor(rng, {3}, -0.5, 0.5);
  auto convt_wrt = [&](int which) {
    return [&, which](Tape& t, Value v) {
      Value xv = which == 0 ? v : t.constant(x2);
      Value wv = which == 1 ? v : t.constant(w2);
      Value bv = which == 2 ? v : t.constant(b2);
      return sum(sigmoid(chw_to_hwc(conv_transpose2d(xv, wv, bv, 2, 1))));
    };
  };
  CHECK(gradient_check(convt_wrt(0), x2, 1e-5) < 1e-5);
  CHECK(gradient_check(convt_wrt(1), w2, 1e-5) < 1e-5);
  CHECK(gradient_check(convt_wrt(2), b2, 1e-5) < 1e-5);
}

TEST_CASE("tape replay is bit-deterministic") {
  Rng rng(31);
  const Tensor a = random_tensor(rng, {6, 6});
  const Tensor b = random_tensor(rng, {6, 6});
  auto run = [&] {
    Tape t;
    Value av = t.input(a), bv = t.input(b);
    Value loss = mean(sigmoid(matmul(layer_norm(av), softmax(bv))));
    t.backward(loss);
    std::vector<double> out{t.value(loss)[0]};
    for (int i = 0; i < 36; ++i) out.push_back(t.grad(av)[i]);
    return out;
  };
  auto r1 = run(), r2 = run();
  CHECK(std::memcmp(r1.data(), r2.data(), r1.size() * sizeof(double)) == 0);
}

TEST_CASE("adamw") {
  SUBCASE("zero gradient and zero weight decay leave params unchanged") {
    ParameterStore store;
    store.add("x", Tensor({3}, {1.0, -2.0, 0.5}));
    AdamWConfig cfg;
    cfg.weight_decay = 0.0;
    AdamW opt(cfg);
    opt.step(store, {Tensor({3})});
    CHECK(store[0].value[0] == 1.0);
    CHECK(store[0].value[1] == -2.0);
    CHECK(store[0].value[2] == 0.5);
  }

  SUBCASE("one step on x^2 from 1 decreases x") {
    ParameterStore store;
    store.add("x", Tensor::scalar(1.0));
    AdamWConfig cfg;
    cfg.lr = 0.1;
    cfg.weight_decay = 0.0;
    AdamW opt(cfg);
    opt.step(store, {Tensor::scalar(2.0)});  // d(x^2)/dx at 1
    CHECK(store[0].value[0] < 1.0);
    CHECK(store[0].value[0] > 0.0);
  }

  SUBCASE("500 steps reach the quadratic minimum") {
    ParameterStore store;
    store.add("x", Tensor({2}, {1.0, -0.7}));
    AdamWConfig cfg;
    cfg.lr = 0.05;
    cfg.weight_decay = 0.0;
    AdamW opt(cfg);
    for (int i = 0; i < 500; ++i) {
      Tape t;
      Value x = t.input(store[0].value);
      Value loss = sum(mul(x, x));
      t.backward(loss);
      opt.step(store, {t.grad(x)});
    }
    const double loss = store[0].value[0] * store[0].value[0] +
                        store[0].value[1] * store[0].value[1];
    CHECK(loss < 1e-6);
  }

  SUBCASE("rejects shape mismatch") {
    ParameterStore store;
    store.add("x", Tensor({3}));
    AdamW opt;
    CHECK_THROWS_AS(opt.step(store, {Tensor({4})}), Error);
  }
}
