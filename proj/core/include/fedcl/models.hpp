#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "fedcl/centroids.hpp"
#include "fedcl/channel.hpp"
#include "fedcl/layers.hpp"
#include "fedcl/mlp.hpp"
#include "fedcl/rng.hpp"
#include "fedcl/tensor.hpp"

namespace fedcl::models {

/// Client-side semantic encoder. hidden_dims may differ between clients;
/// feature_dim is the contract with the shared decoder.
struct EncoderSpec {
  std::size_t input_dim = 0;
  std::vector<std::size_t> hidden_dims;
  std::size_t feature_dim = 64;
  std::uint64_t seed = 0;
};

struct DecoderSpec {
  std::size_t feature_dim = 64;
  std::vector<std::size_t> hidden_dims;
  std::size_t num_classes = 10;
  std::uint64_t seed = 0;
};

Mlp make_encoder(const EncoderSpec& spec);
Mlp make_decoder(const DecoderSpec& spec);

/// Batched or single-sample forward passes; both cache for split_backward.
Tensor encoder_forward(const Tensor& x, Mlp& encoder);
Tensor decoder_forward(const Tensor& received_features, Mlp& decoder);

struct SplitGradients {
  GradBundle decoder;        // parameter gradients of the server-side decoder
  Tensor boundary;           // dL/d f_hat, including the regulariser term
  Tensor noised_boundary;    // boundary after the downlink
  GradBundle encoder;        // encoder gradients driven by noised_boundary
};

/// Backprop through the decoder from dL/dlogits, add `regularizer_grad`
/// (dL/d f_hat of the centroid term, or an empty tensor) at the boundary,
/// send the boundary gradient over `downlink` row by row, then backprop the
/// received gradient through the encoder. The uplink is treated as identity
/// in the backward direction.
SplitGradients split_backward(const Tensor& logit_grad, const Tensor& regularizer_grad, Mlp& decoder, Mlp& encoder,
                              const channel::ChannelConfig& downlink, Rng& rng);

/// Server-side semantic centroid generator: fixed N(0, I) seeds z_c pushed
/// through affine -> ReLU -> affine. Only the network trains.
class CentroidGenerator {
 public:
  CentroidGenerator() = default;
  CentroidGenerator(std::size_t classes, std::size_t feature_dim, std::size_t hidden, std::uint64_t seed);
  CentroidGenerator(Tensor seeds, Mlp network);

  std::size_t num_classes() const { return seeds_.rows(); }
  std::size_t feature_dim() const { return seeds_.cols(); }
  const Tensor& seeds() const noexcept { return seeds_; }
  Mlp& network() noexcept { return net_; }
  const Mlp& network() const noexcept { return net_; }

  /// [C x d] centroids, cached for backward().
  Tensor forward();
  /// Gradients for the network given dL/dF for every class.
  GradBundle backward(const Tensor& centroid_grad);

 private:
  Tensor seeds_;
  Mlp net_;
};

/// F^c = sigma(z_c) for every class; no cache side effects.
CentroidSet scg_forward(const CentroidGenerator& scg);

}  // namespace fedcl::models
