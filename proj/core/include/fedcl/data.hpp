#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "fedcl/tensor.hpp"

namespace fedcl::data {

/// Row i of x has label y[i].
struct Dataset {
  Tensor x;                   // [N x dim]
  std::vector<std::size_t> y;
  std::size_t num_classes = 0;

  std::size_t size() const noexcept { return y.size(); }
  std::size_t dim() const { return x.cols(); }
  Dataset subset(std::span<const std::size_t> indices) const;
  /// Row indices grouped by class, ascending within each class.
  std::vector<std::vector<std::size_t>> indices_by_class() const;
};

/// Gaussian blobs: class means radius * u_c with u_c uniform on the unit
/// sphere, samples N(mean_c, spread^2 I). spread = 0 yields the means exactly.
struct BlobSpec {
  std::size_t classes = 10;
  std::size_t dim = 16;
  std::size_t per_class = 200;
  double spread = 1.0;
  double radius = 4.0;
  std::uint64_t seed = 0;
};

Dataset gen_blobs(const BlobSpec& spec);

/// m-way q-shot: each of K clients gets m distinct classes and q samples of
/// each, drawn without replacement from the class pool.
struct PartitionSpec {
  std::size_t clients = 10;
  std::size_t ways = 2;    // m
  std::size_t shots = 50;  // q
  std::uint64_t seed = 0;
};

inline constexpr int kMaxPartitionRetries = 1000;

struct Shard {
  std::vector<std::size_t> classes;  // ascending
  std::vector<std::size_t> indices;  // rows of the source dataset
};

/// Class assignments are drawn independently per client (overlap allowed)
/// and redrawn until every class is owned and no class is over-subscribed.
/// Throws ConfigError naming the violated class after kMaxPartitionRetries.
std::vector<Shard> partition_mwayqshot(const Dataset& ds, const PartitionSpec& spec);

struct HoldoutSplit {
  Dataset train;
  Dataset test;
};

/// Moves `per_class` random samples of every class into a test set.
HoldoutSplit split_holdout(const Dataset& ds, std::size_t per_class, std::uint64_t seed);

/// CSV with header `y,x0,x1,...`. C is inferred as max(y) + 1.
Dataset load_csv(const std::filesystem::path& path);
void save_csv(const Dataset& ds, const std::filesystem::path& path);

}  // namespace fedcl::data
