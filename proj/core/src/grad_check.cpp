#include "fedcl/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "fedcl/error.hpp"

namespace fedcl {

double relative_error(double analytic, double numeric) noexcept {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), kRelativeErrorFloor});
  return std::abs(analytic - numeric) / denom;
}

double max_relative_error(std::span<Tensor* const> params, const GradBundle& analytic,
                          const std::function<double()>& loss, double eps) {
  if (!(eps >= 1e-7 && eps <= 1e-3)) throw std::invalid_argument("grad check eps must lie in [1e-7, 1e-3]");
  if (params.size() != analytic.size()) throw DimensionError("grad check: parameter/gradient count mismatch");
  auto eval = [&] {
    const double v = loss();
    if (!std::isfinite(v)) throw NumericError("grad check: loss is not finite");
    return v;
  };
  eval();
  double worst = 0.0;
  for (std::size_t p = 0; p < params.size(); ++p) {
    require_same_shape(*params[p], analytic.tensors[p], "grad check");
    auto values = params[p]->data();
    const auto grads = analytic.tensors[p].data();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      values[i] = saved + eps;
      const double up = eval();
      values[i] = saved - eps;
      const double down = eval();
      values[i] = saved;
      worst = std::max(worst, relative_error(grads[i], (up - down) / (2.0 * eps)));
    }
  }
  return worst;
}

double grad_check(Mlp& network, const Tensor& input, std::size_t label, double eps) {
  const Tensor logits = network.forward(input);
  const LossAndGrad lg = softmax_cross_entropy(logits, label);
  if (!std::isfinite(lg.loss)) throw NumericError("grad check: loss is not finite");
  const GradBundle analytic = network.backward(lg.grad).params;
  auto params = network.parameters();
  return max_relative_error(params, analytic,
                            [&] { return softmax_cross_entropy(network.predict(input), label).loss; }, eps);
}

}  // namespace fedcl
