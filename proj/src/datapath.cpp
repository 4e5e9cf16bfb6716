#include "opal/datapath.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numeric>

#include "opal/error.hpp"

namespace opal {
namespace {

uint64_t ceil_div(uint64_t a, uint64_t b) { return (a + b - 1) / b; }

bool fits(int32_t code, int bits) { return code >= -max_code(bits) && code <= max_code(bits); }

}  // namespace

const char* to_string(MuMode mode) {
  switch (mode) {
    case MuMode::kLowLow: return "low-low";
    case MuMode::kLowHigh: return "low-high";
    case MuMode::kHighHigh: return "high-high";
  }
  return "?";
}

PrecisionProfile PrecisionProfile::from_name(const std::string& name) {
  std::string key;
  for (char c : name) {
    if (c != '/') key.push_back(static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
  }
  if (key == "W3A35") return w3a3_5();
  if (key == "W4A47") return w4a4_7();
  throw ConfigError("profile must be W3A3/5 or W4A4/7, got \"" + name + "\"");
}

void validate(const PrecisionProfile& p) {
  const bool w3 = p.w_bits == 3 && p.a_low == 3 && p.a_high == 5;
  const bool w4 = p.w_bits == 4 && p.a_low == 4 && p.a_high == 7;
  if (!w3 && !w4) {
    throw ConfigError("precision profile must be (3,3,5) or (4,4,7), got (" + std::to_string(p.w_bits) + "," +
                      std::to_string(p.a_low) + "," + std::to_string(p.a_high) + ")");
  }
}

std::pair<int, int> operand_bits(MuMode mode, const PrecisionProfile& p) {
  switch (mode) {
    case MuMode::kLowLow: return {p.a_low, p.w_bits};
    case MuMode::kLowHigh: return {p.a_high, p.w_bits};
    case MuMode::kHighHigh: return {p.a_high, p.a_high};
  }
  return {p.a_high, p.a_high};
}

uint64_t CoreGeometry::cycles_per_pass(MuMode mode) const {
  return ceil_div(block, mus_per_lane * static_cast<uint64_t>(pairs_per_mu_cycle(mode)));
}

uint64_t OpCounters::total_int_macs() const { return std::accumulate(int_macs.begin(), int_macs.end(), uint64_t{0}); }

uint64_t OpCounters::total_cycles() const { return std::accumulate(cycles.begin(), cycles.end(), uint64_t{0}); }

double OpCounters::int_fraction() const {
  const uint64_t total = total_macs();
  return total == 0 ? 0.0 : static_cast<double>(total_int_macs()) / static_cast<double>(total);
}

OpCounters& OpCounters::operator+=(const OpCounters& o) {
  for (size_t i = 0; i < kMuModeCount; ++i) {
    int_macs[i] += o.int_macs[i];
    cycles[i] += o.cycles[i];
  }
  fp_macs += o.fp_macs;
  lane_passes += o.lane_passes;
  lane_busy_cycles += o.lane_busy_cycles;
  return *this;
}

DistributedLane distribute(const LaneInput& lane) {
  const MxBlock& a = lane.activation;
  const MxBlock& w = lane.weight;
  if (a.codes.size() != w.codes.size()) {
    throw ConfigError("lane operands differ in length (" + std::to_string(a.codes.size()) + " vs " +
                      std::to_string(w.codes.size()) + ")");
  }
  if (lane.begin > lane.end || lane.end > a.codes.size()) {
    throw ConfigError("lane channel range is out of bounds");
  }
  const size_t k = a.codes.size();
  std::vector<const Outlier*> a_out(k, nullptr);
  std::vector<const Outlier*> w_out(k, nullptr);
  for (const auto& o : a.outliers) {
    if (o.index >= k) throw ConfigError("activation outlier index " + std::to_string(o.index) + " >= " + std::to_string(k));
    a_out[o.index] = &o;
  }
  for (const auto& o : w.outliers) {
    if (o.index >= k) throw ConfigError("weight bf16 column " + std::to_string(o.index) + " >= " + std::to_string(k));
    w_out[o.index] = &o;
  }

  DistributedLane out;
  out.int_pairs.reserve(lane.end - lane.begin);
  const double a_step = a.step();
  const double w_step = w.step();
  for (size_t c = lane.begin; c < lane.end; ++c) {
    const auto ch = static_cast<uint16_t>(c);
    if (a_out[c] == nullptr && w_out[c] == nullptr) {
      out.int_pairs.push_back({ch, a.codes[c], w.codes[c]});
      continue;
    }
    const Bf16 av = a_out[c] ? a_out[c]->value : Bf16::from_double(a.codes[c] * a_step);
    const Bf16 wv = w_out[c] ? w_out[c]->value : Bf16::from_double(w.codes[c] * w_step);
    out.fp_pairs.push_back({ch, av, wv});
  }
  return out;
}

MuResult mu_multiply(MuMode mode, const PrecisionProfile& profile, std::span<const int32_t> a_codes,
                     std::span<const int32_t> w_codes) {
  if (a_codes.size() != w_codes.size()) {
    throw ConfigError("mu_multiply: operand counts differ");
  }
  const auto [a_bits, w_bits] = operand_bits(mode, profile);
  MuResult r;
  r.products.resize(a_codes.size());
  for (size_t i = 0; i < a_codes.size(); ++i) {
    if (!fits(a_codes[i], a_bits) || !fits(w_codes[i], w_bits)) {
      throw ConfigError(std::string("operand exceeds ") + std::to_string(a_bits) + "x" + std::to_string(w_bits) +
                        "-bit width of " + to_string(mode) + " mode");
    }
    r.products[i] = a_codes[i] * w_codes[i];
  }
  r.cycles = ceil_div(a_codes.size(), static_cast<uint64_t>(pairs_per_mu_cycle(mode)));
  return r;
}

LaneResult lane_dot(const LaneInput& lane, MuMode mode, const PrecisionProfile& profile,
                    const CoreGeometry& geometry) {
  const DistributedLane routed = distribute(lane);

  std::vector<int32_t> a_codes(routed.int_pairs.size());
  std::vector<int32_t> w_codes(routed.int_pairs.size());
  for (size_t i = 0; i < routed.int_pairs.size(); ++i) {
    a_codes[i] = routed.int_pairs[i].a;
    w_codes[i] = routed.int_pairs[i].w;
  }
  const MuResult products = mu_multiply(mode, profile, a_codes, w_codes);
  const int64_t int_sum = std::accumulate(products.products.begin(), products.products.end(), int64_t{0});

  LaneResult r;
  // Int-to-FP: fold in both shared scales, round once to bfloat16.
  const double scaled = static_cast<double>(int_sum) * lane.activation.step() * lane.weight.step();
  r.int_part = Bf16::from_double(scaled).to_float();
  for (const FpPair& p : routed.fp_pairs) {
    r.fp_part += round_bf16(p.a.to_float() * p.w.to_float());
  }
  r.value = r.int_part + r.fp_part;
  r.int_macs = routed.int_pairs.size();
  r.fp_macs = routed.fp_pairs.size();
  r.mu_cycles = ceil_div(r.int_macs, geometry.mus_per_lane * static_cast<uint64_t>(pairs_per_mu_cycle(mode)));
  return r;
}

Tensor QuantizedMatrix::dequantize() const {
  Tensor out({rows, cols});
  for (size_t r = 0; r < rows; ++r) {
    auto dst = out.row(r);
    for (size_t c = 0; c < blocks_per_row(); ++c) {
      const auto deq = block(r, c).dequantize();
      const size_t begin = c * k;
      const size_t len = std::min(k, cols - begin);
      std::copy_n(deq.begin(), len, dst.begin() + static_cast<std::ptrdiff_t>(begin));
    }
  }
  return out;
}

std::vector<size_t> select_bf16_columns(const Tensor& weights, double fraction) {
  if (weights.ndim() != 2) {
    throw ConfigError("weights must be a 2-D [out, in] tensor");
  }
  if (!(fraction >= 0.0 && fraction < 1.0)) {
    throw ConfigError("bf16 column fraction must lie in [0, 1)");
  }
  const size_t cols = weights.inner();
  const auto count = static_cast<size_t>(std::llround(fraction * static_cast<double>(cols)));
  std::vector<double> norms(cols, 0.0);
  for (size_t r = 0; r < weights.outer(); ++r) {
    const auto row = weights.row(r);
    for (size_t c = 0; c < cols; ++c) norms[c] += static_cast<double>(row[c]) * row[c];
  }
  std::vector<size_t> order(cols);
  std::iota(order.begin(), order.end(), size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) { return norms[a] > norms[b]; });
  order.resize(count);
  std::sort(order.begin(), order.end());
  return order;
}

QuantizedMatrix quantize_weights(const Tensor& weights, int w_bits, std::vector<size_t> bf16_columns, size_t k) {
  if (weights.ndim() != 2) {
    throw ConfigError("weights must be a 2-D [out, in] tensor");
  }
  if (k == 0 || k > 65535) {
    throw ConfigError("block size must lie in [1, 65535]");
  }
  QuantizedMatrix q;
  q.rows = weights.outer();
  q.cols = weights.inner();
  q.k = k;
  q.bits = w_bits;
  std::sort(bf16_columns.begin(), bf16_columns.end());
  bf16_columns.erase(std::unique(bf16_columns.begin(), bf16_columns.end()), bf16_columns.end());
  for (size_t c : bf16_columns) {
    if (c >= q.cols) throw ConfigError("bf16 column " + std::to_string(c) + " out of range");
  }
  q.bf16_columns = std::move(bf16_columns);

  const size_t per_row = q.blocks_per_row();
  q.blocks.reserve(q.rows * per_row);
  std::vector<float> padded(k);
  std::vector<size_t> local;
  for (size_t r = 0; r < q.rows; ++r) {
    const auto row = weights.row(r);
    for (size_t c = 0; c < per_row; ++c) {
      const size_t begin = c * k;
      const size_t len = std::min(k, q.cols - begin);
      std::fill(padded.begin(), padded.end(), 0.0f);
      for (size_t i = 0; i < len; ++i) padded[i] = round_bf16(row[begin + i]);
      local.clear();
      for (size_t col : q.bf16_columns) {
        if (col >= begin && col < begin + len) local.push_back(col - begin);
      }
      q.blocks.push_back(quantize_block_with_outliers(padded, local, w_bits));
    }
  }
  return q;
}

CoreOutput core_dot(std::span<const MxBlock> a, std::span<const MxBlock> w, size_t col_begin, size_t col_end,
                    MuMode mode, const PrecisionProfile& profile, const CoreGeometry& geometry) {
  if (a.size() != w.size() || a.empty()) {
    throw ConfigError("core_dot: operand block counts differ (" + std::to_string(a.size()) + " vs " +
                      std::to_string(w.size()) + ")");
  }
  const size_t k = a.front().codes.size();
  if (col_begin >= col_end || col_end > a.size() * k) {
    throw ConfigError("core_dot: channel range out of bounds");
  }
  CoreOutput out;
  const size_t first = col_begin / k;
  const size_t last = (col_end - 1) / k;
  float tree = 0.0f;
  for (size_t c = first; c <= last; ++c) {
    const size_t begin = c == first ? col_begin - c * k : 0;
    const size_t end = c == last ? col_end - c * k : k;
    const LaneResult lr = lane_dot({a[c], w[c], begin, end}, mode, profile, geometry);
    tree += lr.value;
    out.counters.int_macs[static_cast<size_t>(mode)] += lr.int_macs;
    out.counters.fp_macs += lr.fp_macs;
  }
  const uint64_t blocks = last - first + 1;
  out.counters.lane_passes = blocks;
  out.counters.lane_busy_cycles = blocks * geometry.cycles_per_pass(mode);
  out.cycles = ceil_div(blocks, geometry.lanes) * geometry.cycles_per_pass(mode) + geometry.pipeline_cycles;
  out.counters.cycles[static_cast<size_t>(mode)] = out.cycles;
  out.value = tree;
  return out;
}

std::vector<CoreOutput> core_mxv(const QuantizedMatrix& weights, std::span<const MxBlock> activation, MuMode mode,
                                 const PrecisionProfile& profile, const CoreGeometry& geometry) {
  if (activation.size() != weights.blocks_per_row()) {
    throw ConfigError("core_mxv: activation has " + std::to_string(activation.size()) + " blocks, weights expect " +
                      std::to_string(weights.blocks_per_row()));
  }
  std::vector<CoreOutput> out;
  out.reserve(weights.rows);
  for (size_t r = 0; r < weights.rows; ++r) {
    out.push_back(core_dot(activation, weights.row(r), 0, weights.cols, mode, profile, geometry));
  }
  return out;
}

OpCounters sum_counters(std::span<const CoreOutput> outputs) {
  OpCounters total;
  for (const auto& o : outputs) total += o.counters;
  return total;
}

}  // namespace opal
