// Key=value encodings of decoder configs, run results and generation traces.
// The simulate command writes these; the cost command reads the trace back.

#pragma once

#include "opal/kv_file.hpp"
#include "opal/runner.hpp"

namespace opal {

/// Decoder config plus the number of decode steps to trace.
struct SimulationConfig {
  DecoderConfig decoder;
  size_t trace_tokens = 8;
};

/// Accepts the DecoderConfig field names plus `profile` (W3A3/5 or W4A4/7)
/// and `trace_tokens`. Unknown keys and bad values raise ConfigError naming
/// the key.
SimulationConfig simulation_config_from_kv(const KvFile& kv);
KvFile simulation_config_to_kv(const SimulationConfig& cfg);

void append_counters(KvFile& kv, const std::string& prefix, const OpCounters& c);
OpCounters counters_from_kv(const KvFile& kv, const std::string& prefix);

void append_trace(KvFile& kv, const TraceCounts& trace);
/// Reads the "trace." keys written by append_trace.
TraceCounts trace_from_kv(const KvFile& kv);

/// Everything the simulate command reports.
KvFile simulation_manifest(const SimulationConfig& cfg, const DecoderRun& run, const TraceCounts& trace);

}  // namespace opal
