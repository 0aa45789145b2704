#include "fedcl/channel.hpp"

#include <cmath>
#include <stdexcept>

#include "fedcl/error.hpp"

namespace fedcl::channel {

SymbolFrame reshape_to_symbols(const Tensor& features) {
  if (features.empty()) throw DimensionError("reshape_to_symbols: empty tensor");
  const auto v = features.data();
  SymbolFrame frame;
  frame.original_shape = features.shape();
  frame.padded = v.size() % 2 != 0;
  frame.symbols.reserve((v.size() + 1) / 2);
  for (std::size_t i = 0; i + 1 < v.size(); i += 2) frame.symbols.emplace_back(v[i], v[i + 1]);
  if (frame.padded) frame.symbols.emplace_back(v.back(), 0.0);
  return frame;
}

Tensor unshape(const SymbolFrame& frame) {
  Tensor out(frame.original_shape);
  auto v = out.data();
  if (2 * frame.symbols.size() < v.size()) throw DimensionError("unshape: frame too short for its original shape");
  for (std::size_t i = 0; i < v.size(); ++i) {
    const auto& s = frame.symbols[i / 2];
    v[i] = (i % 2 == 0) ? s.real() : s.imag();
  }
  return out;
}

double noise_variance(double signal_power, double snr_db) {
  if (!(signal_power > 0.0) || !std::isfinite(signal_power)) {
    throw std::invalid_argument("noise_variance: signal power must be positive and finite");
  }
  if (std::isnan(snr_db)) throw std::invalid_argument("noise_variance: snr_db is NaN");
  return signal_power / std::pow(10.0, snr_db / 10.0);
}

double signal_power(const SymbolFrame& frame) noexcept {
  if (frame.symbols.empty()) return 0.0;
  double p = 0.0;
  for (const auto& s : frame.symbols) p += std::norm(s);
  return p / static_cast<double>(frame.symbols.size());
}

Transmission transmit(const SymbolFrame& frame, const ChannelConfig& cfg, Rng& rng) {
  if (frame.symbols.empty()) throw DimensionError("transmit: empty frame");
  Transmission out{frame, {1.0, 0.0}, 0.0};
  if (cfg.noiseless()) return out;

  std::normal_distribution<double> unit(0.0, 1.0);
  if (cfg.fading == Fading::rayleigh) {
    const double scale = std::sqrt(0.5);
    do {
      out.gain = {scale * unit(rng), scale * unit(rng)};
    } while (std::norm(out.gain) == 0.0);
  }

  const double power = signal_power(frame);
  if (power == 0.0) return out;
  out.noise_variance = noise_variance(power, cfg.snr_db);
  const double sigma = std::sqrt(out.noise_variance / 2.0);
  for (auto& s : out.frame.symbols) {
    const double re = sigma * unit(rng);
    const double im = sigma * unit(rng);
    s = out.gain * s + std::complex<double>(re, im);
    if (cfg.equalize) s /= out.gain;
  }
  return out;
}

Tensor transmit_tensor(const Tensor& x, const ChannelConfig& cfg, Rng& rng) {
  if (cfg.noiseless()) {
    if (x.empty()) throw DimensionError("transmit_tensor: empty tensor");
    return x;
  }
  return unshape(transmit(reshape_to_symbols(x), cfg, rng).frame);
}

Tensor transmit_rows(const Tensor& batch, const ChannelConfig& cfg, Rng& rng) {
  if (batch.rank() != 2) throw DimensionError("transmit_rows expects [B x d], got " + batch.shape_string());
  if (cfg.noiseless()) return batch;
  Tensor out = batch;
  const std::size_t d = batch.cols();
  for (std::size_t r = 0; r < batch.rows(); ++r) {
    const auto src = batch.row(r);
    Tensor row({d}, std::vector<double>(src.begin(), src.end()));
    const Tensor received = transmit_tensor(row, cfg, rng);
    auto dst = out.row(r);
    for (std::size_t c = 0; c < d; ++c) dst[c] = received[c];
  }
  return out;
}

double empirical_snr_db(const SymbolFrame& sent, const SymbolFrame& received) {
  if (sent.symbols.size() != received.symbols.size() || sent.symbols.empty()) {
    throw DimensionError("empirical_snr_db: frames differ in length");
  }
  double noise = 0.0;
  for (std::size_t i = 0; i < sent.symbols.size(); ++i) noise += std::norm(received.symbols[i] - sent.symbols[i]);
  noise /= static_cast<double>(sent.symbols.size());
  const double power = signal_power(sent);
  if (noise == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(power / noise);
}

}  // namespace fedcl::channel
