#include "opal/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

#include "opal/error.hpp"

namespace opal {
namespace {

size_t checked_numel(const std::vector<size_t>& dims) {
  if (dims.empty()) {
    throw ConfigError("tensor dims must be nonempty");
  }
  if (std::any_of(dims.begin(), dims.end(), [](size_t d) { return d == 0; })) {
    throw ConfigError("tensor dims must be positive, got " + dims_to_string(dims));
  }
  return std::accumulate(dims.begin(), dims.end(), size_t{1}, std::multiplies<>());
}

}  // namespace

Tensor::Tensor(std::vector<size_t> dims) : dims_(std::move(dims)), data_(checked_numel(dims_), 0.0f) {}

Tensor::Tensor(std::vector<size_t> dims, std::vector<float> data)
    : dims_(std::move(dims)), data_(std::move(data)) {
  const size_t expected = checked_numel(dims_);
  if (expected != data_.size()) {
    throw ConfigError("tensor dims " + dims_to_string(dims_) + " need " + std::to_string(expected) +
                      " values, got " + std::to_string(data_.size()));
  }
}

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](float v) { return std::isfinite(v); });
}

std::string dims_to_string(std::span<const size_t> dims) {
  std::string out = "[";
  for (size_t i = 0; i < dims.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(dims[i]);
  }
  return out + "]";
}

}  // namespace opal
