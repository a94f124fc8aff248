#include "venuerank/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "venuerank/errors.hpp"

namespace venuerank::nn {

std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

namespace {
void check_shape(const Shape& shape) {
  for (auto d : shape) {
    if (d == 0) throw ShapeError("tensor dimensions must be positive, got " + shape_string(shape));
  }
}
}  // namespace

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)) {
  check_shape(shape_);
  values_.assign(shape_size(shape_), fill);
}

Tensor::Tensor(Shape shape, std::vector<double> values)
    : shape_(std::move(shape)), values_(std::move(values)) {
  check_shape(shape_);
  if (values_.size() != shape_size(shape_)) {
    throw ShapeError("tensor of shape " + nn::shape_string(shape_) + " needs " +
                     std::to_string(shape_size(shape_)) + " values, got " +
                     std::to_string(values_.size()));
  }
}

Tensor Tensor::vector(std::initializer_list<double> values) {
  return Tensor({values.size()}, std::vector<double>(values));
}

Tensor Tensor::vector(std::span<const double> values) {
  return Tensor({values.size()}, std::vector<double>(values.begin(), values.end()));
}

Tensor Tensor::matrix(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t n = rows.size();
  const std::size_t m = n ? rows.begin()->size() : 0;
  std::vector<double> v;
  v.reserve(n * m);
  for (const auto& r : rows) {
    if (r.size() != m) throw ShapeError("ragged matrix literal");
    v.insert(v.end(), r.begin(), r.end());
  }
  return Tensor({n, m}, std::move(v));
}

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= shape_.size()) {
    throw ShapeError("axis " + std::to_string(axis) + " out of range for " + shape_string());
  }
  return shape_[axis];
}

std::span<double> Tensor::row(std::size_t i) {
  const std::size_t w = shape_.at(1);
  return {values_.data() + i * w, w};
}

std::span<const double> Tensor::row(std::size_t i) const {
  const std::size_t w = shape_.at(1);
  return {values_.data() + i * w, w};
}

void Tensor::fill(double v) { std::fill(values_.begin(), values_.end(), v); }

void Tensor::add_inplace(const Tensor& other) {
  if (other.shape_ != shape_) {
    throw ShapeError("add: " + shape_string() + " vs " + other.shape_string());
  }
  for (std::size_t i = 0; i < values_.size(); ++i) values_[i] += other.values_[i];
}

bool Tensor::all_finite() const noexcept {
  return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
}

void Tensor::require_finite(std::string_view where) const {
  if (!all_finite()) throw NumericError("non-finite value in " + std::string(where));
}

Tensor concat(std::span<const Tensor> parts) {
  std::vector<double> v;
  for (const auto& p : parts) {
    if (p.rank() != 1) throw ShapeError("concat expects rank-1 tensors, got " + p.shape_string());
    v.insert(v.end(), p.values().begin(), p.values().end());
  }
  if (v.empty()) throw ShapeError("concat of nothing");
  const std::size_t n = v.size();
  return Tensor({n}, std::move(v));
}

std::vector<Tensor> split(const Tensor& whole, std::span<const std::size_t> widths) {
  const std::size_t total = std::accumulate(widths.begin(), widths.end(), std::size_t{0});
  if (whole.rank() != 1 || whole.size() != total) {
    throw ShapeError("split: " + whole.shape_string() + " does not match widths summing to " +
                     std::to_string(total));
  }
  std::vector<Tensor> out;
  std::size_t off = 0;
  for (auto w : widths) {
    out.emplace_back(Shape{w}, std::vector<double>(whole.data() + off, whole.data() + off + w));
    off += w;
  }
  return out;
}

}  // namespace venuerank::nn
