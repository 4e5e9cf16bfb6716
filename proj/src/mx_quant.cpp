#include "opal/mx_quant.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "opal/error.hpp"

namespace opal {
namespace {

int32_t round_code(double x, CodeRounding mode, int32_t limit) {
  const double r = mode == CodeRounding::kHalfAwayFromZero ? std::round(x) : std::nearbyint(x);
  return static_cast<int32_t>(std::clamp(r, -static_cast<double>(limit), static_cast<double>(limit)));
}

void check_bits(int b) {
  if (b < kMinCodeBits || b > kMaxCodeBits) {
    throw ConfigError("code bit-width b must lie in [" + std::to_string(kMinCodeBits) + ", " +
                      std::to_string(kMaxCodeBits) + "], got " + std::to_string(b));
  }
}

std::vector<float> to_bf16_values(std::span<const float> values, Bf16Rounding mode) {
  std::vector<float> out(values.size());
  std::transform(values.begin(), values.end(), out.begin(), [mode](float v) { return round_bf16(v, mode); });
  return out;
}

}  // namespace

void validate(const QuantConfig& cfg) {
  if (cfg.k == 0 || cfg.n >= cfg.k) {
    throw ConfigError("block size k must exceed outlier count n (k=" + std::to_string(cfg.k) +
                      ", n=" + std::to_string(cfg.n) + ")");
  }
  if (cfg.k > 65535) {
    throw ConfigError("block size k must be < 65536, got " + std::to_string(cfg.k));
  }
  check_bits(cfg.b);
  if (cfg.offset_bits != 4) {
    throw ConfigError("offset_bits is fixed at 4, got " + std::to_string(cfg.offset_bits));
  }
}

double code_step(int scale_exp, int b) { return std::ldexp(1.0, scale_exp - b + 2); }

float MxBlock::dequantize(size_t i) const {
  for (const auto& o : outliers) {
    if (o.index == i) return o.value.to_float();
  }
  return static_cast<float>(codes[i] * step());
}

std::vector<float> MxBlock::dequantize() const {
  std::vector<float> out(codes.size());
  const double s = step();
  for (size_t i = 0; i < codes.size(); ++i) out[i] = static_cast<float>(codes[i] * s);
  for (const auto& o : outliers) out[o.index] = o.value.to_float();
  return out;
}

bool MxBlock::is_outlier(size_t i) const {
  return std::any_of(outliers.begin(), outliers.end(), [i](const Outlier& o) { return o.index == i; });
}

SharedScale extract_shared_scale(std::span<const float> values, size_t n) {
  if (n >= values.size()) {
    throw ConfigError("outlier count n must be smaller than the block length");
  }
  std::vector<size_t> order(values.size());
  std::iota(order.begin(), order.end(), size_t{0});
  // Stable order: magnitude descending, index ascending on ties.
  auto by_magnitude = [&](size_t a, size_t b) {
    const float ma = std::fabs(values[a]);
    const float mb = std::fabs(values[b]);
    return ma != mb ? ma > mb : a < b;
  };
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n + 1), order.end(), by_magnitude);

  SharedScale out;
  out.outlier_indices.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n));
  out.scale_exp = float_exponent(values[order[n]]);
  return out;
}

MxBlock quantize_block_at_scale(std::span<const float> values, std::span<const size_t> outlier_indices,
                                int scale_exp, int b, CodeRounding rounding, Bf16Rounding bf16_rounding) {
  check_bits(b);
  MxBlock block;
  block.bits = b;
  block.scale_exp = scale_exp;
  block.codes.resize(values.size());

  const double inv_step = std::ldexp(1.0, -(scale_exp - b + 2));
  const int32_t limit = max_code(b);
  for (size_t i = 0; i < values.size(); ++i) {
    block.codes[i] = round_code(static_cast<double>(values[i]) * inv_step, rounding, limit);
  }
  block.outliers.reserve(outlier_indices.size());
  for (size_t idx : outlier_indices) {
    if (idx >= values.size() || block.is_outlier(idx)) {
      throw ConfigError("outlier index " + std::to_string(idx) + " is out of range or repeated");
    }
    block.codes[idx] = 0;
    block.outliers.push_back({static_cast<uint16_t>(idx), Bf16::from_float(values[idx], bf16_rounding)});
  }
  return block;
}

MxBlock quantize_block_with_outliers(std::span<const float> values, std::span<const size_t> outlier_indices,
                                     int b, CodeRounding rounding, Bf16Rounding bf16_rounding) {
  std::vector<bool> excluded(values.size(), false);
  for (size_t idx : outlier_indices) {
    if (idx < values.size()) excluded[idx] = true;
  }
  float max_mag = 0.0f;
  for (size_t i = 0; i < values.size(); ++i) {
    if (!excluded[i]) max_mag = std::max(max_mag, std::fabs(values[i]));
  }
  return quantize_block_at_scale(values, outlier_indices, float_exponent(max_mag), b, rounding, bf16_rounding);
}

MxBlock quantize_block_mxopal(std::span<const float> values, const QuantConfig& cfg) {
  validate(cfg);
  if (values.size() != cfg.k) {
    throw ConfigError("block length " + std::to_string(values.size()) + " does not match k=" +
                      std::to_string(cfg.k));
  }
  const std::vector<float> rounded = to_bf16_values(values, cfg.bf16_rounding);
  const SharedScale scale = extract_shared_scale(rounded, cfg.n);
  return quantize_block_at_scale(rounded, scale.outlier_indices, scale.scale_exp, cfg.b, cfg.rounding,
                                 cfg.bf16_rounding);
}

MxBlock quantize_block_mxint(std::span<const float> values, int b, CodeRounding rounding) {
  if (values.empty()) {
    throw ConfigError("cannot quantize an empty block");
  }
  const std::vector<float> rounded = to_bf16_values(values, Bf16Rounding::kNearestEven);
  const SharedScale scale = extract_shared_scale(rounded, 0);
  return quantize_block_at_scale(rounded, {}, scale.scale_exp, b, rounding);
}

std::vector<float> MinMaxBlock::dequantize() const {
  std::vector<float> out(codes.size());
  for (size_t i = 0; i < codes.size(); ++i) {
    out[i] = static_cast<float>(static_cast<double>(codes[i]) * scale + min);
  }
  return out;
}

MinMaxBlock quantize_block_minmax(std::span<const float> values, int b) {
  if (values.empty()) {
    throw ConfigError("cannot quantize an empty block");
  }
  if (b < 1 || b > 31) {
    throw ConfigError("MinMax bit-width must lie in [1, 31], got " + std::to_string(b));
  }
  const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  MinMaxBlock block;
  block.min = *lo;
  block.codes.assign(values.size(), 0);
  if (*hi == *lo) {
    return block;
  }
  const double levels = std::ldexp(1.0, b) - 1.0;
  const double scale = (static_cast<double>(*hi) - static_cast<double>(*lo)) / levels;
  block.scale = static_cast<float>(scale);
  for (size_t i = 0; i < values.size(); ++i) {
    const double q = std::round((static_cast<double>(values[i]) - block.min) / scale);
    block.codes[i] = static_cast<uint32_t>(std::clamp(q, 0.0, levels));
  }
  return block;
}

size_t QuantizedTensor::rows() const {
  if (dims.empty()) return 0;
  size_t r = 1;
  for (size_t i = 0; i + 1 < dims.size(); ++i) r *= dims[i];
  return r;
}

size_t QuantizedTensor::valid_in_block(size_t col_block) const {
  const size_t begin = col_block * config.k;
  return begin >= inner() ? 0 : std::min(config.k, inner() - begin);
}

QuantizedTensor quantize_tensor(const Tensor& t, const QuantConfig& cfg) {
  validate(cfg);
  QuantizedTensor q;
  q.dims = t.dims();
  q.config = cfg;
  const size_t rows = t.outer();
  const size_t per_row = q.blocks_per_row();
  const size_t total = rows * per_row;
  q.blocks.reserve(total);

  std::vector<float> padded(cfg.k);
  std::vector<float> values;  // bf16-rounded block contents, all blocks
  values.reserve(total * cfg.k);
  std::vector<SharedScale> scales;
  scales.reserve(total);
  std::vector<bool> live(total, false);

  for (size_t r = 0; r < rows; ++r) {
    const auto row = t.row(r);
    for (size_t c = 0; c < per_row; ++c) {
      const size_t begin = c * cfg.k;
      const size_t len = std::min(cfg.k, row.size() - begin);
      std::fill(padded.begin(), padded.end(), 0.0f);
      for (size_t i = 0; i < len; ++i) padded[i] = round_bf16(row[begin + i], cfg.bf16_rounding);
      SharedScale s = extract_shared_scale(padded, cfg.n);
      // A block whose non-outliers are all zero quantizes to zero codes under
      // any exponent, so it must not drag the global minimum down.
      const size_t idx = scales.size();
      for (size_t i = 0; i < cfg.k; ++i) {
        if (padded[i] != 0.0f &&
            std::find(s.outlier_indices.begin(), s.outlier_indices.end(), i) == s.outlier_indices.end()) {
          live[idx] = true;
          break;
        }
      }
      scales.push_back(std::move(s));
      values.insert(values.end(), padded.begin(), padded.end());
    }
  }

  int global = std::numeric_limits<int>::max();
  for (size_t i = 0; i < total; ++i) {
    if (live[i]) global = std::min(global, scales[i].scale_exp);
  }
  if (global == std::numeric_limits<int>::max()) global = Bf16::kMinExponent;
  q.global_scale_exp = global;

  const int max_offset = (1 << cfg.offset_bits) - 1;
  q.block_offsets.resize(total);
  for (size_t i = 0; i < total; ++i) {
    const int offset = live[i] ? std::min(scales[i].scale_exp - global, max_offset) : 0;
    q.block_offsets[i] = static_cast<uint8_t>(offset);
    const std::span<const float> block_values(values.data() + i * cfg.k, cfg.k);
    q.blocks.push_back(quantize_block_at_scale(block_values, scales[i].outlier_indices, global + offset, cfg.b,
                                               cfg.rounding, cfg.bf16_rounding));
  }
  return q;
}

Tensor dequantize(const QuantizedTensor& q) {
  Tensor out(q.dims);
  const size_t per_row = q.blocks_per_row();
  for (size_t r = 0; r < q.rows(); ++r) {
    auto row = out.row(r);
    for (size_t c = 0; c < per_row; ++c) {
      const std::vector<float> deq = q.block(r, c).dequantize();
      const size_t valid = q.valid_in_block(c);
      std::copy_n(deq.begin(), valid, row.begin() + static_cast<std::ptrdiff_t>(c * q.config.k));
    }
  }
  return out;
}

MemoryOverhead memory_overhead(const QuantConfig& cfg) {
  validate(cfg);
  const auto k = static_cast<int64_t>(cfg.k);
  const auto n = static_cast<int64_t>(cfg.n);
  const auto b = static_cast<int64_t>(cfg.b);
  return {(k - n) * b + 16 * n + 4, k * b + 8};
}

double block_mse(std::span<const float> original, std::span<const float> dequantized) {
  if (original.size() != dequantized.size()) {
    throw ConfigError("block_mse: length mismatch (" + std::to_string(original.size()) + " vs " +
                      std::to_string(dequantized.size()) + ")");
  }
  if (original.empty()) {
    throw ConfigError("block_mse: empty input");
  }
  double sum = 0.0;
  for (size_t i = 0; i < original.size(); ++i) {
    const double d = static_cast<double>(original[i]) - static_cast<double>(dequantized[i]);
    sum += d * d;
  }
  return sum / static_cast<double>(original.size());
}

}  // namespace opal
