// SPDX-License-Identifier: Apache-2.0
#include "magpha/tensor.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace magpha {

int64_t Tensor::numel_of(const std::vector<int64_t>& shape) {
  int64_t n = 1;
  for (int64_t d : shape) {
    if (d < 0) throw std::invalid_argument("Tensor: negative dimension");
    n *= d;
  }
  return n;
}

Tensor::Tensor(std::vector<int64_t> shape)
    : shape_(std::move(shape)), values_(static_cast<size_t>(numel_of(shape_)), 0.0) {}

Tensor::Tensor(std::vector<int64_t> shape, std::vector<double> values) : shape_(std::move(shape)) {
  if (numel_of(shape_) != static_cast<int64_t>(values.size())) {
    throw std::invalid_argument("Tensor: value count does not match shape");
  }
  values_ = std::move(values);
}

Tensor Tensor::full(std::vector<int64_t> shape, double value) {
  Tensor t(std::move(shape));
  t.fill(value);
  return t;
}

bool Tensor::all_finite() const {
  for (double v : values_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

void Tensor::fill(double v) {
  for (double& x : values_) x = v;
}

std::string Tensor::shape_str() const {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < shape_.size(); ++i) {
    if (i) os << ", ";
    os << shape_[i];
  }
  os << "]";
  return os.str();
}

}  // namespace magpha
