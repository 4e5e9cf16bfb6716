#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace opal {

/// Dense row-major single-precision tensor.
class Tensor {
 public:
  Tensor() = default;
  /// Zero-filled tensor. Every dim must be positive and `dims` nonempty.
  explicit Tensor(std::vector<size_t> dims);
  Tensor(std::vector<size_t> dims, std::vector<float> data);

  const std::vector<size_t>& dims() const { return dims_; }
  size_t ndim() const { return dims_.size(); }
  size_t numel() const { return data_.size(); }

  /// Length of the innermost dimension.
  size_t inner() const { return dims_.empty() ? 0 : dims_.back(); }
  /// Product of all but the innermost dimension.
  size_t outer() const { return inner() == 0 ? 0 : numel() / inner(); }

  std::span<float> data() { return data_; }
  std::span<const float> data() const { return data_; }

  std::span<float> row(size_t r) { return std::span<float>(data_).subspan(r * inner(), inner()); }
  std::span<const float> row(size_t r) const {
    return std::span<const float>(data_).subspan(r * inner(), inner());
  }

  float& operator[](size_t i) { return data_[i]; }
  float operator[](size_t i) const { return data_[i]; }

  bool all_finite() const;

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  std::vector<size_t> dims_;
  std::vector<float> data_;
};

std::string dims_to_string(std::span<const size_t> dims);

}  // namespace opal
