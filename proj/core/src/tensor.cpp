#include "fedcl/tensor.hpp"

#include <cmath>
#include <functional>
#include <numeric>
#include <sstream>

#include "fedcl/error.hpp"

namespace fedcl {

namespace {

std::size_t element_count(const std::vector<std::size_t>& shape) {
  if (shape.empty()) return 0;
  std::size_t n = 1;
  for (std::size_t d : shape) {
    if (d == 0) throw DimensionError("tensor dimensions must be positive, got " + fedcl::shape_string(shape));
    n *= d;
  }
  return n;
}

}  // namespace

Tensor::Tensor(std::vector<std::size_t> shape, double fill)
    : shape_(std::move(shape)), data_(element_count(shape_), fill) {}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (element_count(shape_) != data_.size()) {
    throw DimensionError("tensor shape " + fedcl::shape_string(shape_) + " does not hold " +
                         std::to_string(data_.size()) + " values");
  }
}

Tensor Tensor::vector(std::initializer_list<double> values) {
  return Tensor({values.size()}, std::vector<double>(values));
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::initializer_list<double> values) {
  return Tensor({rows, cols}, std::vector<double>(values));
}

std::size_t Tensor::rows() const {
  if (shape_.empty()) throw DimensionError("rows() on an empty tensor");
  return shape_[0];
}

std::size_t Tensor::cols() const {
  if (shape_.size() == 1) return 1;
  if (shape_.size() != 2) throw DimensionError("cols() needs rank 1 or 2, got " + shape_string());
  return shape_[1];
}

std::span<double> Tensor::row(std::size_t r) {
  const std::size_t c = cols();
  return std::span<double>(data_).subspan(r * c, c);
}

std::span<const double> Tensor::row(std::size_t r) const {
  const std::size_t c = cols();
  return std::span<const double>(data_).subspan(r * c, c);
}

bool Tensor::all_finite() const noexcept {
  for (double v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

std::string Tensor::shape_string() const { return fedcl::shape_string(shape_); }

std::string shape_string(const std::vector<std::size_t>& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << " x ";
    os << shape[i];
  }
  os << ']';
  return os.str();
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
  if (!a.same_shape(b)) {
    throw DimensionError(std::string(what) + ": shape " + a.shape_string() + " vs " + b.shape_string());
  }
}

double squared_norm(const Tensor& t) noexcept {
  double s = 0.0;
  for (double v : t.data()) s += v * v;
  return s;
}

double dot(std::span<const double> a, std::span<const double> b) noexcept {
  return std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
}

Tensor take_rows(const Tensor& t, std::span<const std::size_t> rows) {
  if (t.rank() != 2) throw DimensionError("take_rows needs a rank-2 tensor, got " + t.shape_string());
  const std::size_t c = t.cols();
  std::vector<double> out;
  out.reserve(rows.size() * c);
  for (std::size_t r : rows) {
    if (r >= t.rows()) throw DimensionError("take_rows: row index out of range");
    auto src = t.row(r);
    out.insert(out.end(), src.begin(), src.end());
  }
  return Tensor({rows.size(), c}, std::move(out));
}

}  // namespace fedcl
