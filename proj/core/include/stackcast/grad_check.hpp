#pragma once

#include <functional>
#include <span>

#include "stackcast/tensor.hpp"

namespace stackcast::diff {

/// Builds a scalar (1x1) output on the supplied graph from the current parameter values.
using ScalarFn = std::function<Var(Graph&)>;

struct GradCheckResult {
  double max_rel_error = 0;
  std::size_t coordinates = 0;
  std::string worst;  // "param[index]" of the worst coordinate
};

/// Denominator floor of the relative error. Central differences carry ~1e-16 * |f| / eps of
/// round-off, so gradients that are zero by construction (softmax-invariant biases) or far
/// smaller than this floor are judged on absolute error instead.
inline constexpr double kGradCheckFloor = 1e-6;

/// Compares back-propagated gradients with central differences, one coordinate at a time.
/// Error per coordinate is |analytic - numeric| / max(floor, |analytic| + |numeric|).
/// `max_coords_per_param` > 0 probes an evenly strided subset of each parameter.
GradCheckResult grad_check(const ScalarFn& f, std::span<Parameter* const> params, double eps = 1e-5,
                           std::size_t max_coords_per_param = 0);

}  // namespace stackcast::diff
