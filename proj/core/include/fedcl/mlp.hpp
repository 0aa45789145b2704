#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "fedcl/layers.hpp"
#include "fedcl/tensor.hpp"

namespace fedcl {

/// Affine layers with ReLU between consecutive layers and a linear output.
/// Zero layers is the identity map. Backprop is hand-wired against the
/// activations cached by the last forward().
class Mlp {
 public:
  struct Backprop {
    GradBundle params;
    Tensor input;
  };

  Mlp() = default;
  /// Glorot-initialised layers in -> hidden... -> out, seeded.
  Mlp(std::size_t in, std::span<const std::size_t> hidden, std::size_t out, std::uint64_t seed);

  static Mlp identity(std::size_t dim);
  static Mlp from_layers(std::vector<AffineLayer> layers);

  std::size_t input_dim() const noexcept { return input_dim_; }
  std::size_t output_dim() const noexcept { return output_dim_; }
  std::size_t depth() const noexcept { return layers_.size(); }

  /// Forward pass that records activations for backward().
  Tensor forward(const Tensor& x);
  /// Forward pass without touching the cache; safe on a const network.
  Tensor predict(const Tensor& x) const;
  /// Consumes the cache from the preceding forward(); throws StateError if absent.
  Backprop backward(const Tensor& grad_out);

  bool has_cache() const noexcept { return cache_valid_; }
  void clear_cache() noexcept;

  std::vector<AffineLayer>& layers() noexcept { return layers_; }
  const std::vector<AffineLayer>& layers() const noexcept { return layers_; }

  std::vector<Tensor*> parameters();
  std::vector<const Tensor*> parameters() const;
  std::size_t parameter_count() const noexcept;

 private:
  void check_input(const Tensor& x) const;

  std::vector<AffineLayer> layers_;
  std::size_t input_dim_ = 0;
  std::size_t output_dim_ = 0;

  // inputs_[i] feeds layer i; pre_[i] is layer i's affine output.
  std::vector<Tensor> inputs_;
  std::vector<Tensor> pre_;
  bool cache_valid_ = false;
};

}  // namespace fedcl
