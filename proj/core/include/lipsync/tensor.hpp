#pragma once

#include <cstdint>
#include <initializer_list>
#include <vector>

#include "lipsync/errors.hpp"

namespace lipsync {

/// Dense row-major tensor of doubles with value semantics.
///
/// Image batches use NHWC layout throughout the library; audio windows are
/// (steps, channels). All hot loops work on the raw buffer, so the class
/// stays deliberately small.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<std::int64_t> shape);
  Tensor(std::vector<std::int64_t> shape, std::vector<double> data);

  static Tensor zeros(std::vector<std::int64_t> shape) { return Tensor(std::move(shape)); }
  static Tensor full(std::vector<std::int64_t> shape, double value);
  static Tensor scalar(double value) { return Tensor({1}, {value}); }

  const std::vector<std::int64_t>& shape() const { return shape_; }
  std::int64_t dim(std::size_t i) const { return shape_.at(i); }
  std::size_t rank() const { return shape_.size(); }
  std::int64_t numel() const { return static_cast<std::int64_t>(data_.size()); }
  bool empty() const { return data_.empty(); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::vector<double>& storage() { return data_; }
  const std::vector<double>& storage() const { return data_; }

  double& operator[](std::int64_t i) { return data_[static_cast<std::size_t>(i)]; }
  double operator[](std::int64_t i) const { return data_[static_cast<std::size_t>(i)]; }

  double& at(std::initializer_list<std::int64_t> index) { return data_[offset(index)]; }
  double at(std::initializer_list<std::int64_t> index) const { return data_[offset(index)]; }

  /// Same buffer, new shape. Element count must match.
  Tensor reshaped(std::vector<std::int64_t> shape) const;

  void fill(double value);
  /// this += scale * other (shapes must match).
  void add_scaled(const Tensor& other, double scale);

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

  /// Throws ShapeError unless the shape matches; -1 entries match any extent.
  void require_shape(const std::vector<std::int64_t>& shape, const char* what) const;

 private:
  std::size_t offset(std::initializer_list<std::int64_t> index) const;

  std::vector<std::int64_t> shape_;
  std::vector<double> data_;
};

std::int64_t shape_numel(const std::vector<std::int64_t>& shape);
std::string shape_to_string(const std::vector<std::int64_t>& shape);

}  // namespace lipsync
