// Log2-quantized attention. Each attention weight is replaced by a shift
// amount AttnQ = clip(-round(log2 softmax(x)_i), 0, 2^b - 1), so the weight is
// 2^-AttnQ and Attn * V reduces to shifts and adds.
//
// The hardware path never evaluates a logarithm: with e^x_i = 2^E_i * 1.M_i and
// sum e^x = 2^E_s * 1.M_s (both rounded to bfloat16),
//
//   round(log2 softmax_i) ~= (E_i - E_s) + sign(M_i - M_s) * [|M_i - M_s| >= 0.5]

#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "opal/bf16.hpp"
#include "opal/mx_quant.hpp"

namespace opal {

struct ExpDecomposition {
  int exponent = 0;       ///< unbiased exponent of bf16(e^x)
  double mantissa = 0.0;  ///< fractional mantissa in [0, 1), a multiple of 2^-7
  bool saturated = false; ///< e^x overflowed and was clamped to the bf16 maximum
  bool flushed = false;   ///< e^x fell below the normal range; reported as (-126, 0)
};

/// e^x in double precision, rounded once to bfloat16 and split into (E, M).
ExpDecomposition exp_decompose(double x);

/// Splits a bfloat16 value into (E, M), flushing zero and subnormals to (-126, 0).
ExpDecomposition decompose_bf16(Bf16 v);

inline constexpr int kMaxAttnBits = 7;

struct AttnRow {
  std::vector<uint32_t> shifts;  ///< AttnQ per key, in [0, 2^bits - 1]
  int bits = 7;
  /// Elements whose approximate log2 came out positive and were clipped to 0.
  size_t clipped_positive = 0;

  size_t size() const { return shifts.size(); }
  uint32_t max_shift() const { return (uint32_t{1} << bits) - 1; }
  double weight(size_t i) const;
};

/// Throws ConfigError unless 1 <= b_attn <= 7.
void validate_attn_bits(int b_attn);

/// Reference: softmax in double with max subtraction, then round-half-away of -log2.
AttnRow log2_softmax_exact(std::span<const float> scores, int b_attn);

/// Exponent/mantissa approximation. The exponentials are bfloat16, summed in
/// single precision and the sum rounded to bfloat16 before decomposition.
AttnRow log2_softmax_hw(std::span<const float> scores, int b_attn);

inline constexpr int kDefaultGuardBits = 16;
/// Accumulator width of the shift-and-accumulate datapath.
inline constexpr int kAccumulatorBits = 48;

struct ShiftAccumulateResult {
  std::vector<float> values;
  uint64_t shift_ops = 0;  ///< integer shift-adds performed
  uint64_t fp_ops = 0;     ///< bfloat16 outlier terms scaled on the FP side
};

/// Z_d = sum_j 2^-AttnQ_j * V[j, d] over the first attn.size() rows of V and
/// columns [col_begin, col_end).
///
/// Integer codes are aligned to the tensor's global exponent (shift left by the
/// block offset), widened by `guard_bits` fractional bits, shifted right by
/// AttnQ_j with truncation toward zero and summed in a signed 48-bit
/// accumulator. Outlier elements are scaled by 2^-AttnQ_j and accumulated in
/// single precision. Throws NumericError if the worst case could overflow the
/// accumulator.
ShiftAccumulateResult attn_shift_accumulate(const AttnRow& attn, const QuantizedTensor& v, size_t col_begin = 0,
                                            size_t col_end = std::numeric_limits<size_t>::max(),
                                            int guard_bits = kDefaultGuardBits);

}  // namespace opal
