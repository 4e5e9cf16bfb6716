// Functional model of one accelerator core: eight data distributors feeding
// eight MxV compute lanes of 32 reconfigurable INT multiply units (MUs), an FP
// adder tree across lanes, and counters for the architectural throughput.
//
// Values are exact where the hardware is exact (integer products and adder
// trees) and rounded where it converts (Int-to-FP to bfloat16, bfloat16 FP
// multiplies). Timing is not pipelined: each lane consumes one 128-channel
// block per pass, and a pass costs 128 / (32 * pairs-per-MU-cycle) cycles.

#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "opal/bf16.hpp"
#include "opal/mx_quant.hpp"
#include "opal/tensor.hpp"

namespace opal {

enum class MuMode { kLowLow = 0, kLowHigh = 1, kHighHigh = 2 };
inline constexpr size_t kMuModeCount = 3;

const char* to_string(MuMode mode);

/// Operand pairs one MU consumes per cycle: 4, 2 and 1.
constexpr int pairs_per_mu_cycle(MuMode mode) {
  switch (mode) {
    case MuMode::kLowLow: return 4;
    case MuMode::kLowHigh: return 2;
    case MuMode::kHighHigh: return 1;
  }
  return 1;
}

struct PrecisionProfile {
  std::string name;
  int w_bits = 4;
  int a_low = 4;
  int a_high = 7;

  static PrecisionProfile w3a3_5() { return {"W3A3/5", 3, 3, 5}; }
  static PrecisionProfile w4a4_7() { return {"W4A4/7", 4, 4, 7}; }
  /// Accepts "W3A3/5" / "W4A4/7" (also without the slash, case-insensitive).
  static PrecisionProfile from_name(const std::string& name);

  friend bool operator==(const PrecisionProfile&, const PrecisionProfile&) = default;
};

void validate(const PrecisionProfile& p);

/// (activation bits, weight-side bits) accepted by an MU in `mode`.
std::pair<int, int> operand_bits(MuMode mode, const PrecisionProfile& p);

struct CoreGeometry {
  size_t lanes = 8;
  size_t mus_per_lane = 32;
  size_t block = 128;
  uint64_t pipeline_cycles = 0;  ///< fixed latency added per MxV row

  /// Multiply-accumulates per core cycle: 256, 512, 1024 for high-high,
  /// low-high, low-low with the default geometry.
  uint64_t macs_per_cycle(MuMode mode) const { return lanes * mus_per_lane * pairs_per_mu_cycle(mode); }
  uint64_t cycles_per_pass(MuMode mode) const;
};

/// Aggregated work counters. Every multiply lands in exactly one of
/// int_macs[mode] or fp_macs.
struct OpCounters {
  std::array<uint64_t, kMuModeCount> int_macs{};
  std::array<uint64_t, kMuModeCount> cycles{};
  uint64_t fp_macs = 0;
  uint64_t lane_passes = 0;
  /// Sum over lanes of cycles each lane spends busy; idle lanes add nothing.
  uint64_t lane_busy_cycles = 0;

  uint64_t total_int_macs() const;
  uint64_t total_macs() const { return total_int_macs() + fp_macs; }
  uint64_t total_cycles() const;
  double int_fraction() const;

  OpCounters& operator+=(const OpCounters& o);
  friend bool operator==(const OpCounters&, const OpCounters&) = default;
};

/// One lane's view of a block pair: channels [begin, end) of an activation
/// block and the matching weight-side block. Weight outliers are its bfloat16
/// channels.
struct LaneInput {
  const MxBlock& activation;
  const MxBlock& weight;
  size_t begin = 0;
  size_t end = 0;
};

/// Convenience for a full block.
inline LaneInput full_lane(const MxBlock& a, const MxBlock& w) { return {a, w, 0, a.codes.size()}; }

struct IntPair {
  uint16_t channel = 0;
  int32_t a = 0;
  int32_t w = 0;
};

struct FpPair {
  uint16_t channel = 0;
  Bf16 a;
  Bf16 w;
};

struct DistributedLane {
  std::vector<IntPair> int_pairs;
  std::vector<FpPair> fp_pairs;
};

/// Routes each channel to the INT path, or to the FP path when either operand
/// is a bfloat16 outlier; the INT-coded partner is dequantized to bfloat16.
DistributedLane distribute(const LaneInput& lane);

struct MuResult {
  std::vector<int32_t> products;
  uint64_t cycles = 0;
};

/// Exact products for one MU; cycles = ceil(pairs / pairs_per_mu_cycle).
/// Throws ConfigError if a code exceeds the mode's operand width.
MuResult mu_multiply(MuMode mode, const PrecisionProfile& profile, std::span<const int32_t> a_codes,
                     std::span<const int32_t> w_codes);

struct LaneResult {
  float value = 0.0f;
  float int_part = 0.0f;  ///< INT adder tree output after Int-to-FP (bfloat16)
  float fp_part = 0.0f;
  uint64_t int_macs = 0;
  uint64_t fp_macs = 0;
  uint64_t mu_cycles = 0;
};

/// INT adder tree sum scaled by both shared exponents and rounded to
/// bfloat16, plus the FP path (bfloat16 products, single-precision sum).
LaneResult lane_dot(const LaneInput& lane, MuMode mode, const PrecisionProfile& profile,
                    const CoreGeometry& geometry = {});

/// Weight matrix in lane format: each row split into k-channel MX blocks at
/// w_bits, with the listed columns kept in bfloat16 in every row.
struct QuantizedMatrix {
  size_t rows = 0;
  size_t cols = 0;
  size_t k = 128;
  int bits = 4;
  std::vector<size_t> bf16_columns;
  std::vector<MxBlock> blocks;

  size_t blocks_per_row() const { return (cols + k - 1) / k; }
  const MxBlock& block(size_t r, size_t c) const { return blocks[r * blocks_per_row() + c]; }
  std::span<const MxBlock> row(size_t r) const {
    return std::span<const MxBlock>(blocks).subspan(r * blocks_per_row(), blocks_per_row());
  }
  /// Dequantized copy ([rows, cols]).
  Tensor dequantize() const;
};

/// Columns with the largest L2 norms (ties to the lower index); the count is
/// round(fraction * cols).
std::vector<size_t> select_bf16_columns(const Tensor& weights, double fraction);

QuantizedMatrix quantize_weights(const Tensor& weights, int w_bits, std::vector<size_t> bf16_columns,
                                 size_t k = 128);

struct CoreOutput {
  float value = 0.0f;
  uint64_t cycles = 0;
  OpCounters counters;
};

/// Dot product of two block sequences over channels [col_begin, col_end):
/// one lane per block (lane = block index mod 8), lane partials summed by the
/// FP adder tree in ascending block order.
CoreOutput core_dot(std::span<const MxBlock> a, std::span<const MxBlock> w, size_t col_begin, size_t col_end,
                    MuMode mode, const PrecisionProfile& profile, const CoreGeometry& geometry = {});

/// Matrix-vector product; `activation` holds one row of blocks.
std::vector<CoreOutput> core_mxv(const QuantizedMatrix& weights, std::span<const MxBlock> activation, MuMode mode,
                                 const PrecisionProfile& profile, const CoreGeometry& geometry = {});

OpCounters sum_counters(std::span<const CoreOutput> outputs);

}  // namespace opal
