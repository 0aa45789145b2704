#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace fedcl {

using Rng = std::mt19937_64;

/// What a random stream is used for. Part of the stream key so that, e.g.,
/// uplink and downlink noise for the same client and round never coincide.
enum class StreamPurpose : std::uint64_t {
  minibatch = 1,
  uplink = 2,
  downlink = 3,
  evaluation = 4,
  partition = 5,
  init = 6,
  data = 7,
  channel_test = 8,
};

/// Mixes a base seed with an ordered key into a new 64-bit seed (splitmix64
/// finaliser chained over the key words).
std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> key) noexcept;

/// Stream dedicated to (purpose, client, round, iteration). Streams for
/// distinct keys are independent, so per-client work can run in any order.
Rng make_stream(std::uint64_t base, StreamPurpose purpose, std::uint64_t client = 0, std::uint64_t round = 0,
                std::uint64_t iteration = 0) noexcept;

}  // namespace fedcl
