#include "bvt/gradcheck.hpp"

#include <cmath>

namespace bvt {

double grad_check(const std::function<double(const Tensor&)>& f, const Tensor& x,
                  const Tensor& analytic_grad, double h) {
  check_same_dims(x, analytic_grad, "grad_check");
  if (h <= 0) throw ConfigError("grad_check: h must be positive");
  Tensor probe = x;
  double max_err = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = probe[i];
    probe[i] = orig + h;
    const double fp = f(probe);
    probe[i] = orig - h;
    const double fm = f(probe);
    probe[i] = orig;
    if (!std::isfinite(fp) || !std::isfinite(fm))
      throw std::runtime_error("grad_check: non-finite function value");
    const double numeric = (fp - fm) / (2.0 * h);
    const double a = analytic_grad[i];
    const double err = std::fabs(a - numeric) / std::max(1.0, std::fabs(a));
    max_err = std::max(max_err, err);
  }
  return max_err;
}

}  // namespace bvt
