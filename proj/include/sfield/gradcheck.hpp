#pragma once
// Central finite-difference verification of tape gradients. The harness is
// independent of any backward rule: it only evaluates forward passes.

#include <functional>

#include "sfield/tape.hpp"

namespace sfield {

// Builds the scalar function on a fresh tape; x enters via tape.input().
using ScalarFn = std::function<Value(Tape&, Value)>;

// Max over coordinates of |analytic - central difference| /
// max(1e-8, |central difference|).
double gradient_check(const ScalarFn& f, const Tensor& x, double eps);

// Same check restricted to selected coordinates; keeps finite differences
// affordable on large parameter tensors.
double gradient_check_at(const ScalarFn& f, const Tensor& x, double eps,
                         const std::vector<std::int64_t>& coords);

}  // namespace sfield
