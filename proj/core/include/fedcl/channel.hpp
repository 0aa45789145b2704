#pragma once

#include <complex>
#include <cstdint>
#include <limits>
#include <vector>

#include "fedcl/rng.hpp"
#include "fedcl/tensor.hpp"

namespace fedcl::channel {

enum class Fading { none, rayleigh };

/// Link parameters. snr_db = +inf is the noiseless sentinel.
struct ChannelConfig {
  double snr_db = 10.0;
  Fading fading = Fading::none;
  bool equalize = true;
  std::uint64_t noise_seed = 0;

  bool noiseless() const noexcept { return snr_db == std::numeric_limits<double>::infinity(); }
  static ChannelConfig ideal() { return ChannelConfig{std::numeric_limits<double>::infinity()}; }
};

/// Real entries packed pairwise into complex symbols.
struct SymbolFrame {
  std::vector<std::complex<double>> symbols;
  std::vector<std::size_t> original_shape;
  bool padded = false;
};

/// (r0, r1) -> r0 + i r1; an odd tail gets a zero imaginary part.
SymbolFrame reshape_to_symbols(const Tensor& features);
/// Inverse of reshape_to_symbols; drops the padding slot.
Tensor unshape(const SymbolFrame& frame);

/// Noise variance per complex symbol: power / 10^(snr_db / 10).
double noise_variance(double signal_power, double snr_db);

/// Mean |s|^2 over the frame.
double signal_power(const SymbolFrame& frame) noexcept;

struct Transmission {
  SymbolFrame frame;
  std::complex<double> gain{1.0, 0.0};
  double noise_variance = 0.0;
};

/// s_hat = h s + n with n ~ CN(0, delta^2). The SNR is measured against the
/// frame's own mean symbol power. h = 1 without fading, otherwise one CN(0, 1)
/// draw per frame (redrawn if exactly zero). With `equalize` the receiver
/// divides by h. An all-zero frame carries no power and passes unchanged.
Transmission transmit(const SymbolFrame& frame, const ChannelConfig& cfg, Rng& rng);

/// reshape -> transmit -> unshape. Used for uplink features and downlink
/// gradients alike.
Tensor transmit_tensor(const Tensor& x, const ChannelConfig& cfg, Rng& rng);

/// Each row of a [B x d] batch is its own frame, drawn from `rng` in row order.
Tensor transmit_rows(const Tensor& batch, const ChannelConfig& cfg, Rng& rng);

/// 10 log10(P_sent / mean |received - sent|^2) over matching symbols.
double empirical_snr_db(const SymbolFrame& sent, const SymbolFrame& received);

}  // namespace fedcl::channel
