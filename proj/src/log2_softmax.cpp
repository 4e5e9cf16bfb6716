#include "opal/log2_softmax.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "opal/error.hpp"

namespace opal {
namespace {

void check_scores(std::span<const float> scores) {
  if (scores.empty()) {
    throw ConfigError("softmax needs at least one score");
  }
  for (float s : scores) {
    if (!std::isfinite(s)) throw ConfigError("softmax scores must be finite");
  }
}

uint32_t clip_shift(double v, uint32_t max_shift) {
  if (v <= 0.0) return 0;
  return v >= max_shift ? max_shift : static_cast<uint32_t>(v);
}

}  // namespace

ExpDecomposition decompose_bf16(Bf16 v) {
  ExpDecomposition d;
  if (v.biased_exponent() == 0) {
    d.exponent = Bf16::kMinExponent;
    d.flushed = true;
    return d;
  }
  d.exponent = v.exponent();
  d.mantissa = std::ldexp(static_cast<double>(v.mantissa()), -Bf16::kMantissaBits);
  return d;
}

ExpDecomposition exp_decompose(double x) {
  if (!std::isfinite(x)) {
    throw ConfigError("exp_decompose needs a finite input");
  }
  Bf16 e = Bf16::from_double(std::exp(x));
  bool saturated = false;
  if (!e.is_finite()) {
    e = kBf16Max;
    saturated = true;
  }
  ExpDecomposition d = decompose_bf16(e);
  d.saturated = saturated;
  return d;
}

double AttnRow::weight(size_t i) const { return std::ldexp(1.0, -static_cast<int>(shifts[i])); }

void validate_attn_bits(int b_attn) {
  if (b_attn < 1 || b_attn > kMaxAttnBits) {
    throw ConfigError("attention bit-width must lie in [1, 7], got " + std::to_string(b_attn));
  }
}

AttnRow log2_softmax_exact(std::span<const float> scores, int b_attn) {
  validate_attn_bits(b_attn);
  check_scores(scores);
  const double max = *std::max_element(scores.begin(), scores.end());
  double sum = 0.0;
  for (float s : scores) sum += std::exp(static_cast<double>(s) - max);
  const double log2_sum = std::log2(sum);

  AttnRow row;
  row.bits = b_attn;
  row.shifts.resize(scores.size());
  for (size_t i = 0; i < scores.size(); ++i) {
    // -log2(softmax_i) = log2(sum) - (x_i - max) * log2(e), never negative.
    const double neg_log2 = log2_sum - (static_cast<double>(scores[i]) - max) * std::numbers::log2e;
    row.shifts[i] = clip_shift(std::round(neg_log2), row.max_shift());
  }
  return row;
}

AttnRow log2_softmax_hw(std::span<const float> scores, int b_attn) {
  validate_attn_bits(b_attn);
  check_scores(scores);
  const double max = *std::max_element(scores.begin(), scores.end());

  std::vector<ExpDecomposition> parts(scores.size());
  float sum = 0.0f;
  for (size_t i = 0; i < scores.size(); ++i) {
    const Bf16 e = Bf16::from_double(std::exp(static_cast<double>(scores[i]) - max));
    parts[i] = decompose_bf16(e);
    if (!parts[i].flushed) sum += e.to_float();
  }
  const ExpDecomposition total = decompose_bf16(Bf16::from_float(sum));

  AttnRow row;
  row.bits = b_attn;
  row.shifts.resize(scores.size());
  for (size_t i = 0; i < scores.size(); ++i) {
    const double dm = parts[i].mantissa - total.mantissa;
    const int gated_sign = dm >= 0.5 ? 1 : (dm <= -0.5 ? -1 : 0);
    const int log2_estimate = (parts[i].exponent - total.exponent) + gated_sign;
    if (log2_estimate > 0) ++row.clipped_positive;
    row.shifts[i] = clip_shift(-static_cast<double>(log2_estimate), row.max_shift());
  }
  return row;
}

ShiftAccumulateResult attn_shift_accumulate(const AttnRow& attn, const QuantizedTensor& v, size_t col_begin,
                                            size_t col_end, int guard_bits) {
  col_end = std::min(col_end, v.inner());
  if (attn.size() == 0 || attn.size() > v.rows()) {
    throw ConfigError("attention row has " + std::to_string(attn.size()) + " weights but V has " +
                      std::to_string(v.rows()) + " rows");
  }
  if (col_begin >= col_end) {
    throw ConfigError("empty V column range");
  }
  if (guard_bits < 0 || guard_bits > 24) {
    throw ConfigError("guard bits must lie in [0, 24]");
  }
  const size_t k = v.config.k;
  const size_t rows = attn.size();

  uint8_t max_offset = 0;
  for (size_t j = 0; j < rows; ++j) {
    for (size_t c = col_begin / k; c <= (col_end - 1) / k; ++c) {
      max_offset = std::max(max_offset, v.block_offsets[j * v.blocks_per_row() + c]);
    }
  }
  // Worst case |sum| = rows * max_code * 2^(G + max_offset) must stay below 2^47.
  const double worst = static_cast<double>(rows) * max_code(v.config.b) * std::ldexp(1.0, guard_bits + max_offset);
  if (worst >= std::ldexp(1.0, kAccumulatorBits - 1)) {
    throw NumericError("shift-accumulate could overflow the 48-bit accumulator (" + std::to_string(rows) +
                       " rows, offset " + std::to_string(max_offset) + ")");
  }

  ShiftAccumulateResult out;
  out.values.resize(col_end - col_begin);
  const double scale = std::ldexp(1.0, v.global_scale_exp - v.config.b + 2 - guard_bits);
  for (size_t d = col_begin; d < col_end; ++d) {
    int64_t acc = 0;
    float fp_acc = 0.0f;
    for (size_t j = 0; j < rows; ++j) {
      const MxBlock& blk = v.block(j, d / k);
      const size_t idx = d % k;
      const uint32_t shift = attn.shifts[j];
      if (blk.is_outlier(idx)) {
        fp_acc += std::ldexp(blk.dequantize(idx), -static_cast<int>(shift));
        ++out.fp_ops;
        continue;
      }
      const int32_t code = blk.codes[idx];
      const int align = guard_bits + v.block_offsets[j * v.blocks_per_row() + d / k];
      const int64_t magnitude = static_cast<int64_t>(std::abs(code)) << align;
      const int64_t shifted = shift >= 63 ? 0 : magnitude >> shift;
      acc += code < 0 ? -shifted : shifted;
      ++out.shift_ops;
    }
    out.values[d - col_begin] = static_cast<float>(static_cast<double>(acc) * scale + fp_acc);
  }
  return out;
}

}  // namespace opal
