#include "fedcl/mlp.hpp"

#include <random>
#include <string>

#include "fedcl/error.hpp"

namespace fedcl {

Mlp::Mlp(std::size_t in, std::span<const std::size_t> hidden, std::size_t out, std::uint64_t seed)
    : input_dim_(in), output_dim_(out) {
  if (in == 0 || out == 0) throw DimensionError("Mlp dimensions must be positive");
  std::mt19937_64 rng(seed);
  std::size_t prev = in;
  for (std::size_t h : hidden) {
    if (h == 0) throw DimensionError("Mlp hidden width must be positive");
    layers_.push_back(AffineLayer::glorot(prev, h, rng));
    prev = h;
  }
  layers_.push_back(AffineLayer::glorot(prev, out, rng));
}

Mlp Mlp::identity(std::size_t dim) {
  Mlp net;
  net.input_dim_ = dim;
  net.output_dim_ = dim;
  return net;
}

Mlp Mlp::from_layers(std::vector<AffineLayer> layers) {
  if (layers.empty()) throw DimensionError("Mlp::from_layers needs at least one layer; use identity()");
  for (std::size_t i = 1; i < layers.size(); ++i) {
    if (layers[i].in_dim() != layers[i - 1].out_dim()) {
      throw DimensionError("Mlp layer " + std::to_string(i) + " expects " + std::to_string(layers[i].in_dim()) +
                           " inputs but previous layer emits " + std::to_string(layers[i - 1].out_dim()));
    }
  }
  for (const auto& l : layers) {
    if (l.bias.rank() != 1 || l.bias.size() != l.out_dim()) {
      throw DimensionError("Mlp bias " + l.bias.shape_string() + " does not match weight " + l.weight.shape_string());
    }
  }
  Mlp net;
  net.input_dim_ = layers.front().in_dim();
  net.output_dim_ = layers.back().out_dim();
  net.layers_ = std::move(layers);
  return net;
}

void Mlp::check_input(const Tensor& x) const {
  const std::size_t width = x.rank() == 1 ? x.size() : x.rank() == 2 ? x.cols() : 0;
  if (width != input_dim_) {
    throw DimensionError("network input " + x.shape_string() + " does not match input dimension " +
                         std::to_string(input_dim_));
  }
}

Tensor Mlp::forward(const Tensor& x) {
  check_input(x);
  inputs_.clear();
  pre_.clear();
  Tensor h = x;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    inputs_.push_back(h);
    Tensor z = affine_forward(h, layers_[i]);
    h = (i + 1 < layers_.size()) ? relu(z) : z;
    pre_.push_back(std::move(z));
  }
  cache_valid_ = true;
  return h;
}

Tensor Mlp::predict(const Tensor& x) const {
  check_input(x);
  Tensor h = x;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    h = affine_forward(h, layers_[i]);
    if (i + 1 < layers_.size()) h = relu(h);
  }
  return h;
}

Mlp::Backprop Mlp::backward(const Tensor& grad_out) {
  if (!cache_valid_) throw StateError("Mlp::backward called without a cached forward pass");
  Backprop out;
  out.params.tensors.resize(2 * layers_.size());
  Tensor g = grad_out;
  for (std::size_t i = layers_.size(); i-- > 0;) {
    if (i + 1 < layers_.size()) g = relu_backward(pre_[i], g);
    AffineGrads ag = affine_backward(inputs_[i], layers_[i], g);
    out.params.tensors[2 * i] = std::move(ag.weight);
    out.params.tensors[2 * i + 1] = std::move(ag.bias);
    g = std::move(ag.input);
  }
  out.input = std::move(g);
  clear_cache();
  return out;
}

void Mlp::clear_cache() noexcept {
  inputs_.clear();
  pre_.clear();
  cache_valid_ = false;
}

std::vector<Tensor*> Mlp::parameters() {
  std::vector<Tensor*> ps;
  for (auto& l : layers_) {
    ps.push_back(&l.weight);
    ps.push_back(&l.bias);
  }
  return ps;
}

std::vector<const Tensor*> Mlp::parameters() const {
  std::vector<const Tensor*> ps;
  for (const auto& l : layers_) {
    ps.push_back(&l.weight);
    ps.push_back(&l.bias);
  }
  return ps;
}

std::size_t Mlp::parameter_count() const noexcept {
  std::size_t n = 0;
  for (const auto& l : layers_) n += l.weight.size() + l.bias.size();
  return n;
}

}  // namespace fedcl
