#include "opal/manifest.hpp"

#include "opal/error.hpp"

namespace opal {
namespace {

const char* mode_key(size_t m) {
  static constexpr const char* kNames[kMuModeCount] = {"low_low", "low_high", "high_high"};
  return kNames[m];
}

const char* scheme_key(Scheme s) {
  switch (s) {
    case Scheme::kOpal: return "opal";
    case Scheme::kOwq: return "owq";
    case Scheme::kBf16: return "bf16";
  }
  return "?";
}

constexpr Scheme kSchemes[] = {Scheme::kOpal, Scheme::kOwq, Scheme::kBf16};

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys{
      "d_model",    "d_k",          "heads",       "seq_len",           "ffn_dim",
      "profile",    "seed",         "bypass",      "block_size",        "outliers_per_block",
      "attn_bits",  "trace_tokens", "weight_bf16_fraction", "input_outlier_rate", "input_outlier_multiplier"};
  return keys;
}

size_t get_size(const KvFile& kv, const std::string& key, size_t fallback) {
  return static_cast<size_t>(kv.get_u64(key, static_cast<uint64_t>(fallback)));
}

}  // namespace

SimulationConfig simulation_config_from_kv(const KvFile& kv) {
  const auto unknown = kv.unknown_keys(config_keys());
  if (!unknown.empty()) {
    throw ConfigError(unknown.front() + ": unknown config key");
  }
  SimulationConfig s;
  DecoderConfig& c = s.decoder;
  c.d_model = get_size(kv, "d_model", c.d_model);
  c.d_k = get_size(kv, "d_k", c.d_k);
  c.heads = get_size(kv, "heads", c.heads);
  c.seq_len = get_size(kv, "seq_len", c.seq_len);
  c.ffn_dim = get_size(kv, "ffn_dim", c.ffn_dim);
  if (const auto name = kv.get("profile")) {
    try {
      c.profile = PrecisionProfile::from_name(*name);
    } catch (const ConfigError& e) {
      throw ConfigError(std::string("profile: ") + e.what());
    }
  }
  c.seed = kv.get_u64("seed", c.seed);
  c.bypass = kv.get_bool("bypass", c.bypass);
  c.block_size = get_size(kv, "block_size", c.block_size);
  c.outliers_per_block = get_size(kv, "outliers_per_block", c.outliers_per_block);
  c.weight_bf16_fraction = kv.get_double("weight_bf16_fraction", c.weight_bf16_fraction);
  c.attn_bits = kv.get_int("attn_bits", c.attn_bits);
  c.input_outlier_rate = kv.get_double("input_outlier_rate", c.input_outlier_rate);
  c.input_outlier_multiplier = kv.get_double("input_outlier_multiplier", c.input_outlier_multiplier);
  s.trace_tokens = get_size(kv, "trace_tokens", s.trace_tokens);
  if (s.trace_tokens == 0) {
    throw ConfigError("trace_tokens: must be >= 1");
  }
  validate(c);
  return s;
}

KvFile simulation_config_to_kv(const SimulationConfig& s) {
  const DecoderConfig& c = s.decoder;
  KvFile kv;
  kv.set("profile", c.profile.name);
  kv.set("d_model", static_cast<uint64_t>(c.d_model));
  kv.set("d_k", static_cast<uint64_t>(c.d_k));
  kv.set("heads", static_cast<uint64_t>(c.heads));
  kv.set("seq_len", static_cast<uint64_t>(c.seq_len));
  kv.set("ffn_dim", static_cast<uint64_t>(c.effective_ffn_dim()));
  kv.set("seed", c.seed);
  kv.set("bypass", c.bypass);
  kv.set("block_size", static_cast<uint64_t>(c.block_size));
  kv.set("outliers_per_block", static_cast<uint64_t>(c.outliers_per_block));
  kv.set("weight_bf16_fraction", c.weight_bf16_fraction);
  kv.set("attn_bits", c.effective_attn_bits());
  kv.set("input_outlier_rate", c.input_outlier_rate);
  kv.set("input_outlier_multiplier", c.input_outlier_multiplier);
  kv.set("trace_tokens", static_cast<uint64_t>(s.trace_tokens));
  return kv;
}

void append_counters(KvFile& kv, const std::string& prefix, const OpCounters& c) {
  for (size_t m = 0; m < kMuModeCount; ++m) kv.set(prefix + "int_macs." + mode_key(m), c.int_macs[m]);
  kv.set(prefix + "fp_macs", c.fp_macs);
  for (size_t m = 0; m < kMuModeCount; ++m) kv.set(prefix + "cycles." + mode_key(m), c.cycles[m]);
  kv.set(prefix + "lane_passes", c.lane_passes);
  kv.set(prefix + "lane_busy_cycles", c.lane_busy_cycles);
}

OpCounters counters_from_kv(const KvFile& kv, const std::string& prefix) {
  OpCounters c;
  for (size_t m = 0; m < kMuModeCount; ++m) c.int_macs[m] = kv.get_u64(prefix + "int_macs." + mode_key(m));
  c.fp_macs = kv.get_u64(prefix + "fp_macs");
  for (size_t m = 0; m < kMuModeCount; ++m) c.cycles[m] = kv.get_u64(prefix + "cycles." + mode_key(m));
  c.lane_passes = kv.get_u64(prefix + "lane_passes");
  c.lane_busy_cycles = kv.get_u64(prefix + "lane_busy_cycles");
  return c;
}

void append_trace(KvFile& kv, const TraceCounts& t) {
  kv.set("trace.profile", t.profile);
  kv.set("trace.n_tokens", static_cast<uint64_t>(t.n_tokens));
  append_counters(kv, "trace.", t.counters);
  kv.set("trace.softmax_rows", t.softmax_rows);
  kv.set("trace.softmax_elements", t.softmax_elements);
  kv.set("trace.shift_ops", t.shift_ops);
  kv.set("trace.quantizer_blocks", t.quantizer_blocks);
  for (Scheme s : kSchemes) {
    const Traffic& tr = t.traffic(s);
    const std::string p = std::string("trace.traffic.") + scheme_key(s) + ".";
    kv.set(p + "weight_bytes", tr.weight_bytes);
    kv.set(p + "activation_bytes", tr.activation_bytes);
    kv.set(p + "kv_bytes", tr.kv_bytes);
    kv.set(p + "footprint_bytes", tr.footprint_bytes);
  }
}

TraceCounts trace_from_kv(const KvFile& kv) {
  TraceCounts t;
  t.profile = kv.get("trace.profile").value_or("");
  t.n_tokens = static_cast<size_t>(kv.get_u64("trace.n_tokens"));
  t.counters = counters_from_kv(kv, "trace.");
  t.softmax_rows = kv.get_u64("trace.softmax_rows");
  t.softmax_elements = kv.get_u64("trace.softmax_elements");
  t.shift_ops = kv.get_u64("trace.shift_ops");
  t.quantizer_blocks = kv.get_u64("trace.quantizer_blocks");
  for (Scheme s : kSchemes) {
    Traffic& tr = s == Scheme::kOpal ? t.opal : (s == Scheme::kOwq ? t.owq : t.bf16);
    const std::string p = std::string("trace.traffic.") + scheme_key(s) + ".";
    tr.weight_bytes = kv.get_double(p + "weight_bytes");
    tr.activation_bytes = kv.get_double(p + "activation_bytes");
    tr.kv_bytes = kv.get_double(p + "kv_bytes");
    tr.footprint_bytes = kv.get_double(p + "footprint_bytes");
  }
  return t;
}

KvFile simulation_manifest(const SimulationConfig& cfg, const DecoderRun& run, const TraceCounts& trace) {
  KvFile kv = simulation_config_to_kv(cfg);
  kv.set("fidelity.cosine_similarity", run.fidelity.cosine_similarity);
  kv.set("fidelity.relative_l2_error", run.fidelity.relative_l2_error);
  kv.set("fidelity.delta_cosine_similarity", run.fidelity.delta_cosine_similarity);
  append_counters(kv, "counters.", run.counters);
  kv.set("counters.total_macs", run.counters.total_macs());
  kv.set("counters.int_fraction", run.counters.int_fraction());
  for (size_t l = 0; l < kLayerCount; ++l) {
    const OpCounters& c = run.layer_counters[l];
    const std::string p = std::string("layer.") + to_string(static_cast<LayerName>(l)) + ".";
    kv.set(p + "int_macs", c.total_int_macs());
    kv.set(p + "fp_macs", c.fp_macs);
    kv.set(p + "cycles", c.total_cycles());
  }
  kv.set("softmax.rows", run.softmax_rows);
  kv.set("softmax.elements", run.softmax_elements);
  kv.set("softmax.clipped_positive", run.softmax_clipped_positive);
  kv.set("shift_ops", run.shift_ops);
  kv.set("quantizer_blocks", run.quantizer_blocks);
  append_trace(kv, trace);
  return kv;
}

}  // namespace opal
