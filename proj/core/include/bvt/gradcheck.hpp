// Central-difference gradient checker for the hand-written backward passes.
#pragma once

#include <functional>

#include "bvt/tensor.hpp"

namespace bvt {

// Max over coordinates of |analytic - central difference| / max(1, |analytic|).
// f must evaluate to a finite scalar in an h-neighborhood of x.
double grad_check(const std::function<double(const Tensor&)>& f, const Tensor& x,
                  const Tensor& analytic_grad, double h = 1e-5);

}  // namespace bvt
