#include "fedcl/models.hpp"

#include <algorithm>
#include <random>

#include "fedcl/error.hpp"

namespace fedcl {

CentroidSet CentroidSet::complete(Tensor rows) {
  if (rows.rank() != 2) throw DimensionError("CentroidSet::complete expects [C x d], got " + rows.shape_string());
  CentroidSet set;
  set.present.assign(rows.rows(), true);
  set.vectors = std::move(rows);
  return set;
}

bool CentroidSet::is_complete() const noexcept {
  for (bool p : present) {
    if (!p) return false;
  }
  return !present.empty();
}

std::size_t CentroidSet::count() const noexcept {
  std::size_t n = 0;
  for (bool p : present) n += p ? 1 : 0;
  return n;
}

void CentroidSet::set(std::size_t c, std::span<const double> v) {
  if (v.size() != dim()) throw DimensionError("CentroidSet::set: vector length does not match centroid dim");
  auto dst = vectors.row(c);
  std::copy(v.begin(), v.end(), dst.begin());
  present.at(c) = true;
}

namespace models {

Mlp make_encoder(const EncoderSpec& spec) {
  return Mlp(spec.input_dim, spec.hidden_dims, spec.feature_dim, spec.seed);
}

Mlp make_decoder(const DecoderSpec& spec) {
  return Mlp(spec.feature_dim, spec.hidden_dims, spec.num_classes, spec.seed);
}

Tensor encoder_forward(const Tensor& x, Mlp& encoder) { return encoder.forward(x); }

Tensor decoder_forward(const Tensor& received_features, Mlp& decoder) { return decoder.forward(received_features); }

SplitGradients split_backward(const Tensor& logit_grad, const Tensor& regularizer_grad, Mlp& decoder, Mlp& encoder,
                              const channel::ChannelConfig& downlink, Rng& rng) {
  if (!decoder.has_cache() || !encoder.has_cache()) {
    throw StateError("split_backward requires cached encoder and decoder forward passes");
  }
  SplitGradients out;
  Mlp::Backprop dec = decoder.backward(logit_grad);
  out.decoder = std::move(dec.params);
  out.boundary = std::move(dec.input);
  if (!regularizer_grad.empty()) {
    require_same_shape(out.boundary, regularizer_grad, "split_backward regulariser gradient");
    auto b = out.boundary.data();
    const auto r = regularizer_grad.data();
    for (std::size_t i = 0; i < b.size(); ++i) b[i] += r[i];
  }
  out.noised_boundary = out.boundary.rank() == 2 ? channel::transmit_rows(out.boundary, downlink, rng)
                                                 : channel::transmit_tensor(out.boundary, downlink, rng);
  out.encoder = encoder.backward(out.noised_boundary).params;
  return out;
}

CentroidGenerator::CentroidGenerator(std::size_t classes, std::size_t feature_dim, std::size_t hidden,
                                     std::uint64_t seed) {
  if (classes == 0 || feature_dim == 0 || hidden == 0) throw DimensionError("CentroidGenerator dimensions must be positive");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> unit(0.0, 1.0);
  seeds_ = Tensor({classes, feature_dim});
  for (double& v : seeds_.data()) v = unit(rng);
  const std::size_t widths[] = {hidden};
  net_ = Mlp(feature_dim, widths, feature_dim, rng());
}

CentroidGenerator::CentroidGenerator(Tensor seeds, Mlp network) : seeds_(std::move(seeds)), net_(std::move(network)) {
  if (seeds_.rank() != 2 || net_.input_dim() != seeds_.cols() || net_.output_dim() != seeds_.cols()) {
    throw DimensionError("CentroidGenerator: seeds " + seeds_.shape_string() + " incompatible with network");
  }
}

Tensor CentroidGenerator::forward() { return net_.forward(seeds_); }

GradBundle CentroidGenerator::backward(const Tensor& centroid_grad) {
  require_same_shape(centroid_grad, seeds_, "CentroidGenerator::backward");
  return net_.backward(centroid_grad).params;
}

CentroidSet scg_forward(const CentroidGenerator& scg) { return CentroidSet::complete(scg.network().predict(scg.seeds())); }

}  // namespace models
}  // namespace fedcl
