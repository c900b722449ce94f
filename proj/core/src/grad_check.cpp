#include "stackcast/grad_check.hpp"

#include <algorithm>
#include <cmath>

#include "stackcast/error.hpp"

namespace stackcast::diff {

namespace {
double evaluate(const ScalarFn& f) {
  Graph g;
  const Var out = f(g);
  if (out.rows() != 1 || out.cols() != 1) throw ValidationError("grad_check: function must return a scalar");
  return out.scalar();
}
}  // namespace

GradCheckResult grad_check(const ScalarFn& f, std::span<Parameter* const> params, double eps,
                           std::size_t max_coords_per_param) {
  for (auto* p : params) p->zero_grad();
  {
    Graph g;
    g.backward(f(g));
  }
  GradCheckResult result;
  for (auto* p : params) {
    const Matrix analytic = p->grad;
    const auto n = static_cast<std::size_t>(p->value.size());
    const std::size_t stride = max_coords_per_param == 0 || n <= max_coords_per_param
                                   ? 1
                                   : (n + max_coords_per_param - 1) / max_coords_per_param;
    for (std::size_t k = 0; k < n; k += stride) {
      double& x = p->value.data()[k];
      const double saved = x;
      x = saved + eps;
      const double up = evaluate(f);
      x = saved - eps;
      const double down = evaluate(f);
      x = saved;
      const double numeric = (up - down) / (2 * eps);
      const double a = analytic.data()[k];
      if (!std::isfinite(numeric) || !std::isfinite(a)) throw NumericError("grad_check: non-finite probe on " + p->name);
      const double err = std::abs(a - numeric) / std::max(kGradCheckFloor, std::abs(a) + std::abs(numeric));
      ++result.coordinates;
      if (err > result.max_rel_error || result.worst.empty()) {
        if (err >= result.max_rel_error) {
          result.max_rel_error = err;
          result.worst = p->name + "[" + std::to_string(k) + "]";
        }
      }
    }
  }
  return result;
}

}  // namespace stackcast::diff
