#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace fedcl {

/// Dense row-major array of doubles. Rank 1 holds vectors, rank 2 holds
/// matrices and row-stacked batches; nothing in the engine needs more.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> shape, double fill = 0.0);
  Tensor(std::vector<std::size_t> shape, std::vector<double> data);

  static Tensor vector(std::initializer_list<double> values);
  static Tensor matrix(std::size_t rows, std::size_t cols, std::initializer_list<double> values);
  static Tensor zeros_like(const Tensor& other) { return Tensor(other.shape_); }

  const std::vector<std::size_t>& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  /// Leading dimension; for rank 1 this is the length.
  std::size_t rows() const;
  /// Trailing dimension of a rank-2 tensor, 1 for rank 1.
  std::size_t cols() const;

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }
  std::vector<double>& storage() noexcept { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }
  double& at(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
  double at(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }

  std::span<double> row(std::size_t r);
  std::span<const double> row(std::size_t r) const;

  bool same_shape(const Tensor& other) const noexcept { return shape_ == other.shape_; }
  bool all_finite() const noexcept;
  std::string shape_string() const;

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  std::vector<std::size_t> shape_;
  std::vector<double> data_;
};

std::string shape_string(const std::vector<std::size_t>& shape);

/// Throws DimensionError naming both shapes unless a and b match exactly.
void require_same_shape(const Tensor& a, const Tensor& b, const char* what);

double squared_norm(const Tensor& t) noexcept;
double dot(std::span<const double> a, std::span<const double> b) noexcept;

/// Gather rows of a rank-2 tensor.
Tensor take_rows(const Tensor& t, std::span<const std::size_t> rows);

}  // namespace fedcl
