#include "sfield/gradcheck.hpp"

#include <cmath>

namespace sfield {

namespace {

double check_coords(const ScalarFn& f, const Tensor& x, double eps,
                    const std::vector<std::int64_t>& coords) {
  require(eps > 0.0, "gradient_check: eps must be positive, got ", eps);

  Tape tape;
  Value xv = tape.input(x);
  Value y = f(tape, xv);
  require(tape.value(y).is_scalar(), "gradient_check: f must return a scalar");
  tape.backward(y);
  const Tensor analytic = tape.grad(xv);

  auto eval = [&](const Tensor& at) {
    Tape t;
    return t.value(f(t, t.input(at))).item();
  };

  double max_rel = 0.0;
  Tensor probe = x;
  for (std::int64_t i : coords) {
    const double orig = probe[i];
    probe[i] = orig + eps;
    const double hi = eval(probe);
    probe[i] = orig - eps;
    const double lo = eval(probe);
    probe[i] = orig;
    const double fd = (hi - lo) / (2.0 * eps);
    const double rel =
        std::fabs(analytic[i] - fd) / std::max(1e-8, std::fabs(fd));
    max_rel = std::max(max_rel, rel);
  }
  return max_rel;
}

}  // namespace

double gradient_check(const ScalarFn& f, const Tensor& x, double eps) {
  std::vector<std::int64_t> coords(x.size());
  for (std::int64_t i = 0; i < x.size(); ++i) coords[i] = i;
  return check_coords(f, x, eps, coords);
}

double gradient_check_at(const ScalarFn& f, const Tensor& x, double eps,
                         const std::vector<std::int64_t>& coords) {
  return check_coords(f, x, eps, coords);
}

}  // namespace sfield
