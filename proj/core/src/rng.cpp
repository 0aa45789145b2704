#include "fedcl/rng.hpp"

namespace fedcl {

namespace {

std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> key) noexcept {
  std::uint64_t h = splitmix64(base);
  for (std::uint64_t k : key) h = splitmix64(h ^ splitmix64(k + 0x632be59bd9b4e019ULL));
  return h;
}

Rng make_stream(std::uint64_t base, StreamPurpose purpose, std::uint64_t client, std::uint64_t round,
                std::uint64_t iteration) noexcept {
  const std::uint64_t seed = derive_seed(base, {static_cast<std::uint64_t>(purpose), client, round, iteration});
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)};
  return Rng(seq);
}

}  // namespace fedcl
