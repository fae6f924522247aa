#include "fact/tensor.hpp"

#include <bit>
#include <cmath>
#include <cstdint>
#include <limits>
#include <sstream>
#include <utility>

#include "fact/errors.hpp"

namespace fact {

namespace {
size_t checked_count(const std::vector<size_t>& shape) {
  size_t n = 1;
  for (size_t e : shape) {
    if (e == 0) throw DimensionError("Tensor: extents must be positive");
    n *= e;
  }
  return n;
}
}  // namespace

Tensor::Tensor(std::vector<size_t> shape)
    : shape_(std::move(shape)), values_(checked_count(shape_), 0.0) {}

Tensor::Tensor(std::vector<size_t> shape, std::vector<double> values)
    : shape_(std::move(shape)), values_(std::move(values)) {
  if (checked_count(shape_) != values_.size()) {
    throw DimensionError("Tensor: shape " + shape_str() + " does not match " +
                         std::to_string(values_.size()) + " values");
  }
}

Tensor Tensor::full(std::vector<size_t> shape, double value) {
  Tensor t(std::move(shape));
  for (double& v : t.values_) v = value;
  return t;
}

bool Tensor::all_finite() const {
  for (double v : values_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

std::string Tensor::shape_str() const {
  std::ostringstream os;
  os << "(";
  for (size_t i = 0; i < shape_.size(); ++i) {
    if (i) os << ", ";
    os << shape_[i];
  }
  os << ")";
  return os.str();
}

uint64_t ulp_distance(double a, double b) {
  if (a == b) return 0;
  // Map doubles onto a monotone integer line (negatives mirrored).
  auto key = [](double x) -> int64_t {
    int64_t k = std::bit_cast<int64_t>(x);
    return k < 0 ? std::numeric_limits<int64_t>::min() - k : k;
  };
  int64_t ka = key(a), kb = key(b);
  if (ka < kb) std::swap(ka, kb);
  return static_cast<uint64_t>(ka) - static_cast<uint64_t>(kb);
}

}  // namespace fact
