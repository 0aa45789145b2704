#pragma once

#include <cstddef>
#include <functional>
#include <span>

#include "fedcl/layers.hpp"
#include "fedcl/mlp.hpp"
#include "fedcl/tensor.hpp"

namespace fedcl {

/// |analytic - numeric| / max(|analytic|, |numeric|, floor). The floor keeps
/// near-zero gradients from turning finite-difference rounding into huge
/// ratios; below it the check is effectively absolute.
inline constexpr double kRelativeErrorFloor = 1e-4;

double relative_error(double analytic, double numeric) noexcept;

/// Perturbs every entry of every parameter by ±eps, evaluates `loss` and
/// compares the central difference with the matching analytic entry.
/// Parameters are restored afterwards. Throws NumericError on a non-finite
/// loss and std::invalid_argument if eps is outside [1e-7, 1e-3].
double max_relative_error(std::span<Tensor* const> params, const GradBundle& analytic,
                          const std::function<double()>& loss, double eps);

/// Softmax cross-entropy on top of `network` for a single (input, label).
double grad_check(Mlp& network, const Tensor& input, std::size_t label, double eps);

}  // namespace fedcl
