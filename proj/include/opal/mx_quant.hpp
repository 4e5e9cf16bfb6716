// Outlier-preserved microscaling (MX-OPAL) block quantization, with the plain
// MXINT and MinMax quantizers it is compared against.
//
// A block holds k signed integer codes sharing one power-of-two scale. The
// top-n magnitudes are kept aside as bfloat16 outliers and the shared exponent
// is taken from the largest remaining element, so that element lands on code
// 2^(b-2). A non-outlier dequantizes to code * 2^(E_block - b + 2) and codes
// are clamped to the symmetric range [-(2^(b-1)-1), 2^(b-1)-1].

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "opal/bf16.hpp"
#include "opal/tensor.hpp"

namespace opal {

enum class CodeRounding { kHalfAwayFromZero, kHalfToEven };

struct QuantConfig {
  size_t k = 128;     ///< elements per block
  size_t n = 4;       ///< preserved bfloat16 outliers per block
  int b = 8;          ///< sign + mantissa bits of a non-outlier code
  int offset_bits = 4;
  CodeRounding rounding = CodeRounding::kHalfAwayFromZero;
  Bf16Rounding bf16_rounding = Bf16Rounding::kNearestEven;

  friend bool operator==(const QuantConfig&, const QuantConfig&) = default;
};

inline constexpr int kMinCodeBits = 2;
inline constexpr int kMaxCodeBits = 16;

/// Throws ConfigError unless k > n >= 0, 2 <= b <= 16 and offset_bits == 4.
void validate(const QuantConfig& cfg);

/// Largest code magnitude for b-bit codes, 2^(b-1) - 1.
constexpr int32_t max_code(int b) { return (int32_t{1} << (b - 1)) - 1; }

/// Step between adjacent codes for shared exponent `scale_exp`.
double code_step(int scale_exp, int b);

struct Outlier {
  uint16_t index = 0;
  Bf16 value;
  friend bool operator==(const Outlier&, const Outlier&) = default;
};

struct MxBlock {
  std::vector<int32_t> codes;    ///< zero at outlier positions
  int scale_exp = Bf16::kMinExponent;
  std::vector<Outlier> outliers;
  int bits = 8;

  double step() const { return code_step(scale_exp, bits); }
  float dequantize(size_t i) const;
  std::vector<float> dequantize() const;
  /// True when `i` holds a bfloat16 outlier.
  bool is_outlier(size_t i) const;

  friend bool operator==(const MxBlock&, const MxBlock&) = default;
};

struct SharedScale {
  std::vector<size_t> outlier_indices;  ///< descending magnitude order
  int scale_exp = Bf16::kMinExponent;
};

/// Picks the n largest magnitudes (ties go to the lower index) and returns the
/// exponent of the largest remaining element, or -126 when all remaining
/// elements are zero.
SharedScale extract_shared_scale(std::span<const float> values, size_t n);

/// Quantizes `values` against a fixed shared exponent; `outlier_indices` are
/// stored as bfloat16 and their codes set to zero.
MxBlock quantize_block_at_scale(std::span<const float> values, std::span<const size_t> outlier_indices,
                                int scale_exp, int b, CodeRounding rounding = CodeRounding::kHalfAwayFromZero,
                                Bf16Rounding bf16_rounding = Bf16Rounding::kNearestEven);

/// Like quantize_block_at_scale, but the shared exponent is the maximum
/// exponent over the elements not listed in `outlier_indices`.
MxBlock quantize_block_with_outliers(std::span<const float> values, std::span<const size_t> outlier_indices,
                                     int b, CodeRounding rounding = CodeRounding::kHalfAwayFromZero,
                                     Bf16Rounding bf16_rounding = Bf16Rounding::kNearestEven);

/// Inputs are rounded to bfloat16 first; requires values.size() == cfg.k.
MxBlock quantize_block_mxopal(std::span<const float> values, const QuantConfig& cfg);

/// MX-OPAL with n = 0. Accepts any nonempty length.
MxBlock quantize_block_mxint(std::span<const float> values, int b,
                             CodeRounding rounding = CodeRounding::kHalfAwayFromZero);

struct MinMaxBlock {
  std::vector<uint32_t> codes;
  float scale = 0.0f;
  float min = 0.0f;

  std::vector<float> dequantize() const;
};

/// Affine quantizer with S = (max - min) / (2^b - 1); a constant block gets
/// S = 0 and all-zero codes.
MinMaxBlock quantize_block_minmax(std::span<const float> values, int b);

/// Activation tensor in MX-OPAL form. The innermost dimension is split into
/// blocks of k (the last one zero-padded); blocks are stored row-major.
struct QuantizedTensor {
  std::vector<size_t> dims;
  QuantConfig config;
  int global_scale_exp = Bf16::kMinExponent;
  std::vector<uint8_t> block_offsets;
  std::vector<MxBlock> blocks;

  size_t inner() const { return dims.empty() ? 0 : dims.back(); }
  size_t rows() const;
  size_t blocks_per_row() const { return (inner() + config.k - 1) / config.k; }
  const MxBlock& block(size_t row, size_t col_block) const { return blocks[row * blocks_per_row() + col_block]; }
  /// Unpadded element count of column block `col_block`.
  size_t valid_in_block(size_t col_block) const;

  friend bool operator==(const QuantizedTensor&, const QuantizedTensor&) = default;
};

/// Global exponent = minimum block exponent over blocks with nonzero
/// non-outliers; offsets saturate at 2^offset_bits - 1, and a saturated block
/// is requantized against global + 15 so its codes clamp.
QuantizedTensor quantize_tensor(const Tensor& t, const QuantConfig& cfg);

/// Inverse encoding with padding stripped.
Tensor dequantize(const QuantizedTensor& q);

struct MemoryOverhead {
  int64_t numerator = 0;    ///< (k - n) * b + 16 * n + 4
  int64_t denominator = 1;  ///< k * b + 8
  double ratio() const { return static_cast<double>(numerator) / static_cast<double>(denominator); }
  double percent() const { return (ratio() - 1.0) * 100.0; }
};

/// Storage of an MX-OPAL block relative to an MXINT block with an 8-bit
/// shared exponent.
MemoryOverhead memory_overhead(const QuantConfig& cfg);

/// Mean squared difference. Throws ConfigError on length mismatch or empty input.
double block_mse(std::span<const float> original, std::span<const float> dequantized);

}  // namespace opal
