#include "fedcl/layers.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "fedcl/error.hpp"

namespace fedcl {

AffineLayer AffineLayer::glorot(std::size_t in, std::size_t out, std::mt19937_64& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
  std::uniform_real_distribution<double> dist(-limit, limit);
  AffineLayer layer = zeros(in, out);
  for (double& w : layer.weight.data()) w = dist(rng);
  return layer;
}

AffineLayer AffineLayer::zeros(std::size_t in, std::size_t out) {
  return AffineLayer{Tensor({out, in}), Tensor({out})};
}

namespace {

void check_input(const Tensor& x, const AffineLayer& layer) {
  const std::size_t width = x.rank() == 1 ? x.size() : x.rank() == 2 ? x.cols() : 0;
  if (width == 0 || width != layer.in_dim()) {
    throw DimensionError("affine input " + x.shape_string() + " does not match weight " +
                         layer.weight.shape_string());
  }
}

}  // namespace

Tensor affine_forward(const Tensor& x, const AffineLayer& layer) {
  check_input(x, layer);
  const std::size_t in = layer.in_dim();
  const std::size_t out = layer.out_dim();
  const std::size_t batch = x.rank() == 1 ? 1 : x.rows();
  Tensor y = x.rank() == 1 ? Tensor({out}) : Tensor({batch, out});
  const auto w = layer.weight.data();
  const auto b = layer.bias.data();
  const auto xs = x.data();
  auto ys = y.data();
  for (std::size_t n = 0; n < batch; ++n) {
    const double* xr = xs.data() + n * in;
    double* yr = ys.data() + n * out;
    for (std::size_t o = 0; o < out; ++o) {
      const double* wr = w.data() + o * in;
      double acc = b[o];
      for (std::size_t i = 0; i < in; ++i) acc += wr[i] * xr[i];
      yr[o] = acc;
    }
  }
  return y;
}

AffineGrads affine_backward(const Tensor& x, const AffineLayer& layer, const Tensor& grad_out) {
  check_input(x, layer);
  const std::size_t in = layer.in_dim();
  const std::size_t out = layer.out_dim();
  const std::size_t batch = x.rank() == 1 ? 1 : x.rows();
  if (grad_out.size() != batch * out || grad_out.rank() != x.rank()) {
    throw DimensionError("affine upstream gradient " + grad_out.shape_string() + " does not match output of " +
                         layer.weight.shape_string() + " on input " + x.shape_string());
  }
  AffineGrads g{Tensor::zeros_like(layer.weight), Tensor::zeros_like(layer.bias), Tensor::zeros_like(x)};
  const auto w = layer.weight.data();
  const auto xs = x.data();
  const auto gs = grad_out.data();
  auto gw = g.weight.data();
  auto gb = g.bias.data();
  auto gx = g.input.data();
  for (std::size_t n = 0; n < batch; ++n) {
    const double* xr = xs.data() + n * in;
    const double* gr = gs.data() + n * out;
    double* gxr = gx.data() + n * in;
    for (std::size_t o = 0; o < out; ++o) {
      const double go = gr[o];
      if (go == 0.0) continue;
      gb[o] += go;
      double* gwr = gw.data() + o * in;
      const double* wr = w.data() + o * in;
      for (std::size_t i = 0; i < in; ++i) {
        gwr[i] += go * xr[i];
        gxr[i] += go * wr[i];
      }
    }
  }
  return g;
}

Tensor relu(const Tensor& x) {
  Tensor y = x;
  for (double& v : y.data()) v = v > 0.0 ? v : 0.0;
  return y;
}

Tensor relu_backward(const Tensor& x, const Tensor& grad_out) {
  require_same_shape(x, grad_out, "relu_backward");
  Tensor g = grad_out;
  const auto xs = x.data();
  auto gs = g.data();
  for (std::size_t i = 0; i < gs.size(); ++i) {
    if (!(xs[i] > 0.0)) gs[i] = 0.0;
  }
  return g;
}

namespace {

double softmax_row(std::span<const double> logits, std::size_t label, std::span<double> grad) {
  const double peak = *std::max_element(logits.begin(), logits.end());
  double total = 0.0;
  for (std::size_t c = 0; c < logits.size(); ++c) {
    grad[c] = std::exp(logits[c] - peak);
    total += grad[c];
  }
  for (double& p : grad) p /= total;
  const double loss = std::log(total) - (logits[label] - peak);
  grad[label] -= 1.0;
  return loss;
}

void check_label(std::size_t label, std::size_t classes) {
  if (label >= classes) {
    throw std::invalid_argument("label " + std::to_string(label) + " out of range for " +
                                std::to_string(classes) + " classes");
  }
}

}  // namespace

LossAndGrad softmax_cross_entropy(const Tensor& logits, std::size_t label) {
  if (logits.rank() != 1) throw DimensionError("softmax_cross_entropy expects a vector, got " + logits.shape_string());
  check_label(label, logits.size());
  LossAndGrad out{0.0, Tensor::zeros_like(logits)};
  out.loss = softmax_row(logits.data(), label, out.grad.data());
  return out;
}

BatchLoss softmax_cross_entropy(const Tensor& logits, std::span<const std::size_t> labels) {
  if (logits.rank() != 2 || logits.rows() != labels.size()) {
    throw DimensionError("softmax_cross_entropy: logits " + logits.shape_string() + " vs " +
                         std::to_string(labels.size()) + " labels");
  }
  BatchLoss out{std::vector<double>(labels.size()), Tensor::zeros_like(logits)};
  for (std::size_t n = 0; n < labels.size(); ++n) {
    check_label(labels[n], logits.cols());
    out.losses[n] = softmax_row(logits.row(n), labels[n], out.grad.row(n));
  }
  return out;
}

double GradBundle::squared_norm() const noexcept {
  double s = 0.0;
  for (const auto& t : tensors) s += fedcl::squared_norm(t);
  return s;
}

void GradBundle::add(const GradBundle& other) {
  if (other.size() != size()) throw DimensionError("GradBundle::add: bundle sizes differ");
  for (std::size_t i = 0; i < size(); ++i) {
    require_same_shape(tensors[i], other.tensors[i], "GradBundle::add");
    auto dst = tensors[i].data();
    const auto src = other.tensors[i].data();
    for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += src[j];
  }
}

void GradBundle::scale(double factor) {
  for (auto& t : tensors) {
    for (double& v : t.data()) v *= factor;
  }
}

GradBundle GradBundle::zeros_like(std::span<const Tensor* const> params) {
  GradBundle g;
  g.tensors.reserve(params.size());
  for (const Tensor* p : params) g.tensors.push_back(Tensor::zeros_like(*p));
  return g;
}

void sgd_step(std::span<Tensor* const> params, const GradBundle& grads, double lr) {
  if (!(lr >= 0.0) || !std::isfinite(lr)) throw std::invalid_argument("sgd_step: learning rate must be finite and >= 0");
  if (params.size() != grads.size()) {
    throw DimensionError("sgd_step: " + std::to_string(params.size()) + " parameters vs " +
                         std::to_string(grads.size()) + " gradients");
  }
  for (std::size_t i = 0; i < params.size(); ++i) require_same_shape(*params[i], grads.tensors[i], "sgd_step");
  if (lr == 0.0) return;
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto p = params[i]->data();
    const auto g = grads.tensors[i].data();
    for (std::size_t j = 0; j < p.size(); ++j) p[j] -= lr * g[j];
  }
}

}  // namespace fedcl
