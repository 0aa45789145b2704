#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "fedcl/tensor.hpp"

namespace fedcl {

/// One vector per class, possibly with holes. `owner` is the client id for a
/// local set and kGlobal for a server-side set.
struct CentroidSet {
  static constexpr int kGlobal = -1;

  Tensor vectors;              // [C x d]
  std::vector<bool> present;   // size C
  int owner = kGlobal;

  CentroidSet() = default;
  CentroidSet(std::size_t classes, std::size_t dim, int owner_id = kGlobal)
      : vectors({classes, dim}), present(classes, false), owner(owner_id) {}

  /// Global set with every class filled from a [C x d] tensor.
  static CentroidSet complete(Tensor rows);

  std::size_t num_classes() const noexcept { return present.size(); }
  std::size_t dim() const { return vectors.cols(); }
  bool has(std::size_t c) const { return present.at(c); }
  bool is_complete() const noexcept;
  std::size_t count() const noexcept;

  std::span<const double> operator[](std::size_t c) const { return vectors.row(c); }
  void set(std::size_t c, std::span<const double> v);
};

}  // namespace fedcl
