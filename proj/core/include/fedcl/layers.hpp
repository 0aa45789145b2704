#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "fedcl/tensor.hpp"

namespace fedcl {

/// y = W·x + b with W stored [out x in].
struct AffineLayer {
  Tensor weight;
  Tensor bias;

  std::size_t in_dim() const { return weight.cols(); }
  std::size_t out_dim() const { return weight.rows(); }

  /// Glorot-uniform weights in ±sqrt(6 / (in + out)), zero bias.
  static AffineLayer glorot(std::size_t in, std::size_t out, std::mt19937_64& rng);
  static AffineLayer zeros(std::size_t in, std::size_t out);
};

/// Accepts a single vector [in] or a row-stacked batch [B x in].
Tensor affine_forward(const Tensor& x, const AffineLayer& layer);

struct AffineGrads {
  Tensor weight;
  Tensor bias;
  Tensor input;
};

/// Gradients are summed over the batch rows of x.
AffineGrads affine_backward(const Tensor& x, const AffineLayer& layer, const Tensor& grad_out);

Tensor relu(const Tensor& x);
/// Gates grad_out by (x > 0); the subgradient at exactly 0 is 0.
Tensor relu_backward(const Tensor& x, const Tensor& grad_out);

struct LossAndGrad {
  double loss = 0.0;
  Tensor grad;
};

/// -log softmax(logits)[label] with max-subtraction; grad = softmax - onehot.
LossAndGrad softmax_cross_entropy(const Tensor& logits, std::size_t label);

/// Batch form over rows of logits [B x C]. Returns the per-row losses and the
/// per-row gradients (not averaged).
struct BatchLoss {
  std::vector<double> losses;
  Tensor grad;
};
BatchLoss softmax_cross_entropy(const Tensor& logits, std::span<const std::size_t> labels);

/// One gradient tensor per trainable tensor, in parameter order.
struct GradBundle {
  std::vector<Tensor> tensors;

  std::size_t size() const noexcept { return tensors.size(); }
  double squared_norm() const noexcept;
  void add(const GradBundle& other);
  void scale(double factor);
  static GradBundle zeros_like(std::span<const Tensor* const> params);
};

/// p <- p - lr * g for each pair, in place. lr = 0 leaves params untouched.
void sgd_step(std::span<Tensor* const> params, const GradBundle& grads, double lr);

}  // namespace fedcl
