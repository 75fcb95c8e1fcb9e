#include "sargan/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "sargan/errors.hpp"

namespace sargan {

std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

std::string shape_str(const Shape& shape) {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(shape[i]);
  }
  return out + "]";
}

Tensor::Tensor(Shape shape, double fill)
    : shape_(std::move(shape)), data_(shape_numel(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (data_.size() != shape_numel(shape_)) {
    throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                     " does not match shape " + shape_str(shape_));
  }
}

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= shape_.size()) {
    throw ShapeError("axis " + std::to_string(axis) + " out of range for shape " +
                     shape_str(shape_));
  }
  return shape_[axis];
}

void Tensor::fill(double value) { std::fill(data_.begin(), data_.end(), value); }

Tensor& Tensor::operator+=(const Tensor& other) {
  if (other.shape_ != shape_) {
    throw ShapeError("cannot add " + shape_str(other.shape_) + " into " +
                     shape_str(shape_));
  }
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
  return *this;
}

Tensor Tensor::reshaped(Shape shape) const {
  return Tensor(std::move(shape), data_);
}

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(),
                     [](double v) { return std::isfinite(v); });
}

double Tensor::sum() const { return std::accumulate(data_.begin(), data_.end(), 0.0); }

double Tensor::max_abs() const {
  double m = 0.0;
  for (double v : data_) m = std::max(m, std::abs(v));
  return m;
}

Tensor slice_batch(const Tensor& t, std::size_t n) {
  if (t.rank() != 4 || n >= t.dim(0)) {
    throw ShapeError("slice_batch: index " + std::to_string(n) + " invalid for " +
                     shape_str(t.shape()));
  }
  const std::size_t per = t.size() / t.dim(0);
  Shape shape = t.shape();
  shape[0] = 1;
  auto first = t.data().begin() + static_cast<std::ptrdiff_t>(n * per);
  return Tensor(std::move(shape), std::vector<double>(first, first + static_cast<std::ptrdiff_t>(per)));
}

Tensor stack_batch(std::span<const Tensor> samples) {
  if (samples.empty()) throw ShapeError("stack_batch: no samples");
  Shape shape = samples.front().shape();
  if (shape.size() != 4 || shape[0] != 1) {
    throw ShapeError("stack_batch: expected 1xCxHxW samples, got " + shape_str(shape));
  }
  std::vector<double> data;
  data.reserve(shape_numel(shape) * samples.size());
  for (const Tensor& s : samples) {
    if (s.shape() != shape) {
      throw ShapeError("stack_batch: sample shape " + shape_str(s.shape()) +
                       " differs from " + shape_str(shape));
    }
    data.insert(data.end(), s.data().begin(), s.data().end());
  }
  shape[0] = samples.size();
  return Tensor(std::move(shape), std::move(data));
}

}  // namespace sargan
