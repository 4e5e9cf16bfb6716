// Decoder-block execution on the modeled datapath, against a double-precision
// reference with identical weights.
//
// Flow (pre-LN block): LN -> quantize(a_low) -> Q/K/V projections (low-low)
// -> quantize(a_high) -> Q.K^T / sqrt(d_k) (high-high) -> log2 softmax ->
// shift-accumulate Attn.V -> quantize(a_high) -> o_proj (low-high) -> residual
// -> LN -> quantize(a_low) -> fc1 (low-low) -> SiLU -> quantize(a_high) -> fc2
// (low-high) -> residual. LayerNorm, SiLU and the residual adds run in high
// precision.

#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "opal/datapath.hpp"
#include "opal/tensor.hpp"

namespace opal {

enum class LayerName { kQProj, kKProj, kVProj, kOProj, kAttnQk, kAttnV, kFfnFc1, kFfnFc2 };
inline constexpr size_t kLayerCount = 8;

const char* to_string(LayerName name);

enum class PrecisionClass { kLow, kHigh };

struct LayerSpec {
  LayerName name;
  PrecisionClass activation_class;
  std::optional<MuMode> mode;  ///< empty for attn_v, which uses shift-accumulate

  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

/// The fixed precision placement: LN-fed layers (q/k/v_proj, ffn_fc1) are low,
/// everything else high; Q.K^T runs high-high.
const LayerSpec& layer_spec(LayerName name);

struct DecoderConfig {
  size_t d_model = 256;
  size_t d_k = 64;
  size_t heads = 4;
  size_t seq_len = 16;
  size_t ffn_dim = 0;  ///< 0 selects 4 * d_model
  PrecisionProfile profile = PrecisionProfile::w4a4_7();
  uint64_t seed = 42;
  /// Skip every quantizer and run the block in single precision.
  bool bypass = false;

  size_t block_size = 128;
  size_t outliers_per_block = 4;
  double weight_bf16_fraction = 0.003;
  int attn_bits = 0;  ///< 0 selects profile.a_high

  // Synthetic input: gaussian bulk with injected outliers.
  double input_outlier_rate = 4.0 / 128.0;
  double input_outlier_multiplier = 16.0;

  size_t effective_ffn_dim() const { return ffn_dim == 0 ? 4 * d_model : ffn_dim; }
  int effective_attn_bits() const { return attn_bits == 0 ? profile.a_high : attn_bits; }
};

/// Throws ConfigError naming the offending field.
void validate(const DecoderConfig& cfg);

struct DecoderWeights {
  Tensor wq, wk, wv, wo;  ///< [d_model, d_model]
  Tensor w1;              ///< [ffn_dim, d_model]
  Tensor w2;              ///< [d_model, ffn_dim]
};

/// Gaussian weights with variance 1 / fan_in, seeded from cfg.seed.
DecoderWeights make_weights(const DecoderConfig& cfg);

/// [seq_len, d_model] synthetic input seeded from cfg.seed.
Tensor make_input(const DecoderConfig& cfg);

struct FidelityMetrics {
  double cosine_similarity = 0.0;
  double relative_l2_error = 0.0;
  /// Cosine similarity of the block's residual contribution (output - input).
  double delta_cosine_similarity = 0.0;
};

FidelityMetrics compare_outputs(const Tensor& output, const Tensor& reference, const Tensor& input);

struct DecoderRun {
  Tensor output;
  Tensor reference;
  FidelityMetrics fidelity;
  OpCounters counters;
  std::array<OpCounters, kLayerCount> layer_counters{};
  uint64_t softmax_rows = 0;
  uint64_t softmax_elements = 0;
  uint64_t softmax_clipped_positive = 0;
  uint64_t shift_ops = 0;
  uint64_t quantizer_blocks = 0;
  std::vector<LayerSpec> executed;
};

/// Double-precision pass with exact softmax; no quantization anywhere.
Tensor reference_decoder_block(const DecoderConfig& cfg, const DecoderWeights& w, const Tensor& input);

DecoderRun run_decoder_block(const DecoderConfig& cfg, const DecoderWeights& w, const Tensor& input);
/// Generates weights and input from the config seed.
DecoderRun run_decoder_block(const DecoderConfig& cfg);

/// Bytes moved through the global buffer for one scheme.
struct Traffic {
  double weight_bytes = 0.0;
  double activation_bytes = 0.0;
  double kv_bytes = 0.0;
  /// Buffer capacity the scheme needs resident: largest layer's weights, the
  /// KV cache at its final length and the largest activation vector.
  double footprint_bytes = 0.0;

  double total() const { return weight_bytes + activation_bytes + kv_bytes; }
};

enum class Scheme { kOpal, kOwq, kBf16 };

/// Closed-form counts for autoregressive decode of n_tokens, the i-th token
/// (0-based) attending over seq_len + i + 1 cached positions.
///
/// Every activation block is assumed to carry exactly outliers_per_block FP
/// channels, disjoint from round(weight_bf16_fraction * fan_in) bfloat16
/// weight columns; Q.K^T sees the Q and K outliers of its head slice.
struct TraceCounts {
  std::string profile;
  size_t n_tokens = 0;
  OpCounters counters;
  std::array<OpCounters, kLayerCount> layer_counters{};
  uint64_t softmax_rows = 0;
  uint64_t softmax_elements = 0;
  uint64_t shift_ops = 0;
  uint64_t quantizer_blocks = 0;
  Traffic opal;
  Traffic owq;
  Traffic bf16;

  const Traffic& traffic(Scheme s) const;
};

TraceCounts run_generation_trace(const DecoderConfig& cfg, size_t n_tokens);

/// Number of bfloat16 weight columns the magnitude proxy keeps for `fan_in`.
size_t bf16_column_count(const DecoderConfig& cfg, size_t fan_in);

}  // namespace opal
