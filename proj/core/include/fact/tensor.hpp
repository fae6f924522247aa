#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace fact {

// Dense n-dimensional array of 64-bit floats, row-major. The substrate for
// parameters, activations and gradients.
class Tensor {
 public:
  Tensor() = default;
  // Zero-filled tensor of the given shape. Extents must be positive.
  explicit Tensor(std::vector<size_t> shape);
  Tensor(std::vector<size_t> shape, std::vector<double> values);

  static Tensor zeros(std::vector<size_t> shape) { return Tensor(std::move(shape)); }
  static Tensor full(std::vector<size_t> shape, double value);

  const std::vector<size_t>& shape() const { return shape_; }
  size_t size() const { return values_.size(); }
  size_t ndim() const { return shape_.size(); }

  // 2-d helpers.
  size_t rows() const { return shape_.at(0); }
  size_t cols() const { return shape_.at(1); }
  double& at(size_t i, size_t j) { return values_[i * shape_[1] + j]; }
  double at(size_t i, size_t j) const { return values_[i * shape_[1] + j]; }

  double& operator[](size_t i) { return values_[i]; }
  double operator[](size_t i) const { return values_[i]; }

  std::vector<double>& values() { return values_; }
  const std::vector<double>& values() const { return values_; }
  double* data() { return values_.data(); }
  const double* data() const { return values_.data(); }

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
  bool all_finite() const;

  std::string shape_str() const;

  bool operator==(const Tensor& other) const = default;

 private:
  std::vector<size_t> shape_;
  std::vector<double> values_;
};

// Number of representable doubles strictly between a and b; 0 means equal.
// Used by aggregation-exactness tests.
uint64_t ulp_distance(double a, double b);

}  // namespace fact
