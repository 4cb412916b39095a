#include "lipsync/tensor.hpp"

#include <sstream>

namespace lipsync {

std::int64_t shape_numel(const std::vector<std::int64_t>& shape) {
  std::int64_t n = 1;
  for (std::int64_t d : shape) {
    if (d < 0) throw ShapeError("negative dimension in shape " + shape_to_string(shape));
    n *= d;
  }
  return n;
}

std::string shape_to_string(const std::vector<std::int64_t>& shape) {
  std::ostringstream os;
  os << "(";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  os << ")";
  return os.str();
}

Tensor::Tensor(std::vector<std::int64_t> shape)
    : shape_(std::move(shape)), data_(static_cast<std::size_t>(shape_numel(shape_)), 0.0) {}

Tensor::Tensor(std::vector<std::int64_t> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (shape_numel(shape_) != static_cast<std::int64_t>(data_.size())) {
    throw ShapeError("data size does not match shape " + shape_to_string(shape_));
  }
}

Tensor Tensor::full(std::vector<std::int64_t> shape, double value) {
  Tensor t(std::move(shape));
  t.fill(value);
  return t;
}

Tensor Tensor::reshaped(std::vector<std::int64_t> shape) const {
  if (shape_numel(shape) != numel()) {
    throw ShapeError("cannot reshape " + shape_to_string(shape_) + " to " + shape_to_string(shape));
  }
  return Tensor(std::move(shape), data_);
}

void Tensor::fill(double value) {
  for (double& x : data_) x = value;
}

void Tensor::add_scaled(const Tensor& other, double scale) {
  if (!same_shape(other)) {
    throw ShapeError("add_scaled shape mismatch: " + shape_to_string(shape_) + " vs " +
                     shape_to_string(other.shape_));
  }
  const double* src = other.data();
  double* dst = data();
  for (std::int64_t i = 0; i < numel(); ++i) dst[i] += scale * src[i];
}

void Tensor::require_shape(const std::vector<std::int64_t>& shape, const char* what) const {
  bool ok = shape_.size() == shape.size();
  for (std::size_t i = 0; ok && i < shape.size(); ++i) {
    if (shape[i] != -1 && shape_[i] != shape[i]) ok = false;
  }
  if (!ok) {
    throw ShapeError(std::string(what) + ": expected shape " + shape_to_string(shape) + ", got " +
                     shape_to_string(shape_));
  }
}

std::size_t Tensor::offset(std::initializer_list<std::int64_t> index) const {
  if (index.size() != shape_.size()) {
    throw ShapeError("index rank does not match tensor rank");
  }
  std::size_t off = 0;
  std::size_t axis = 0;
  for (std::int64_t i : index) {
    off = off * static_cast<std::size_t>(shape_[axis]) + static_cast<std::size_t>(i);
    ++axis;
  }
  return off;
}

}  // namespace lipsync
