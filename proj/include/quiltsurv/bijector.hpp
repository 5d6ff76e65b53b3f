#pragma once

#include <span>
#include <string>
#include <string_view>

namespace quiltsurv {

/// Maps from unconstrained optimisation space to a parameter's constrained space.
///
/// The element-wise kinds act on each scalar. `ordered_thresholds` acts on
/// consecutive groups of five and produces strictly decreasing values.
enum class Bijector { identity, softplus, negated_softplus, ordered_thresholds };

std::string_view to_string(Bijector b);
Bijector bijector_from_string(std::string_view name);

void bijector_forward(Bijector b, std::span<const double> x, std::span<double> y);
void bijector_inverse(Bijector b, std::span<const double> y, std::span<double> x);

/// log |det dy/dx| of the forward map at x.
double bijector_log_det_jacobian(Bijector b, std::span<const double> x);

}  // namespace quiltsurv
