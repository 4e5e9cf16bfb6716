#include "opal/runner.hpp"

#include <algorithm>
#include <cmath>

#include "opal/error.hpp"
#include "opal/log2_softmax.hpp"
#include "opal/mx_quant.hpp"
#include "opal/rng.hpp"
#include "opal/synthetic.hpp"

namespace opal {
namespace {

constexpr double kLayerNormEps = 1e-5;

constexpr std::array<LayerSpec, kLayerCount> kLayerSpecs{{
    {LayerName::kQProj, PrecisionClass::kLow, MuMode::kLowLow},
    {LayerName::kKProj, PrecisionClass::kLow, MuMode::kLowLow},
    {LayerName::kVProj, PrecisionClass::kLow, MuMode::kLowLow},
    {LayerName::kOProj, PrecisionClass::kHigh, MuMode::kLowHigh},
    {LayerName::kAttnQk, PrecisionClass::kHigh, MuMode::kHighHigh},
    {LayerName::kAttnV, PrecisionClass::kHigh, std::nullopt},
    {LayerName::kFfnFc1, PrecisionClass::kLow, MuMode::kLowLow},
    {LayerName::kFfnFc2, PrecisionClass::kHigh, MuMode::kLowHigh},
}};

size_t index_of(LayerName name) { return static_cast<size_t>(name); }

uint64_t ceil_div(uint64_t a, uint64_t b) { return (a + b - 1) / b; }

// Per-layer seeds so that changing one shape does not perturb the others.
uint64_t derive_seed(uint64_t seed, uint64_t tag) {
  uint64_t state = seed ^ (tag * 0xD1B54A32D192ED03ULL);
  return splitmix64(state);
}

Tensor gaussian_matrix(size_t rows, size_t cols, uint64_t seed) {
  Tensor t({rows, cols});
  Rng rng(seed);
  const double sigma = 1.0 / std::sqrt(static_cast<double>(cols));
  for (float& v : t.data()) v = static_cast<float>(sigma * rng.normal());
  return t;
}

std::vector<double> layer_norm(std::span<const double> x) {
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= static_cast<double>(x.size());
  double var = 0.0;
  for (double v : x) var += (v - mean) * (v - mean);
  var /= static_cast<double>(x.size());
  const double inv = 1.0 / std::sqrt(var + kLayerNormEps);
  std::vector<double> out(x.size());
  for (size_t i = 0; i < x.size(); ++i) out[i] = (x[i] - mean) * inv;
  return out;
}

double silu(double x) { return x / (1.0 + std::exp(-x)); }

using Matrix = std::vector<std::vector<double>>;

Matrix to_matrix(const Tensor& t) {
  Matrix m(t.outer());
  for (size_t r = 0; r < t.outer(); ++r) {
    const auto row = t.row(r);
    m[r].assign(row.begin(), row.end());
  }
  return m;
}

Tensor to_tensor(const Matrix& m) {
  Tensor t({m.size(), m.front().size()});
  for (size_t r = 0; r < m.size(); ++r) {
    std::transform(m[r].begin(), m[r].end(), t.row(r).begin(), [](double v) { return static_cast<float>(v); });
  }
  return t;
}

// y = x W^T in double.
Matrix matmul_t(const Matrix& x, const Tensor& w) {
  Matrix y(x.size(), std::vector<double>(w.outer(), 0.0));
  for (size_t t = 0; t < x.size(); ++t) {
    for (size_t o = 0; o < w.outer(); ++o) {
      const auto wr = w.row(o);
      double acc = 0.0;
      for (size_t i = 0; i < wr.size(); ++i) acc += x[t][i] * wr[i];
      y[t][o] = acc;
    }
  }
  return y;
}

// y = x W^T with single-precision accumulation.
Tensor matmul_t_float(const Tensor& x, const Tensor& w) {
  Tensor y({x.outer(), w.outer()});
  for (size_t t = 0; t < x.outer(); ++t) {
    const auto xr = x.row(t);
    auto yr = y.row(t);
    for (size_t o = 0; o < w.outer(); ++o) {
      const auto wr = w.row(o);
      float acc = 0.0f;
      for (size_t i = 0; i < wr.size(); ++i) acc += xr[i] * wr[i];
      yr[o] = acc;
    }
  }
  return y;
}

Tensor layer_norm_rows(const Tensor& x) {
  Tensor out(x.dims());
  for (size_t r = 0; r < x.outer(); ++r) {
    const auto row = x.row(r);
    const std::vector<double> in(row.begin(), row.end());
    const auto normed = layer_norm(in);
    std::transform(normed.begin(), normed.end(), out.row(r).begin(), [](double v) { return static_cast<float>(v); });
  }
  return out;
}

Tensor add(const Tensor& a, const Tensor& b) {
  Tensor out(a.dims());
  for (size_t i = 0; i < a.numel(); ++i) out[i] = a[i] + b[i];
  return out;
}

// Causal single-head attention on head slice [c0, c1) in double.
void reference_attention(const Matrix& q, const Matrix& k, const Matrix& v, size_t c0, size_t c1, Matrix& z) {
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(c1 - c0));
  for (size_t t = 0; t < q.size(); ++t) {
    std::vector<double> s(t + 1);
    for (size_t j = 0; j <= t; ++j) {
      double acc = 0.0;
      for (size_t c = c0; c < c1; ++c) acc += q[t][c] * k[j][c];
      s[j] = acc * inv_sqrt;
    }
    const double max = *std::max_element(s.begin(), s.end());
    double sum = 0.0;
    for (double& e : s) sum += (e = std::exp(e - max));
    for (size_t c = c0; c < c1; ++c) {
      double acc = 0.0;
      for (size_t j = 0; j <= t; ++j) acc += s[j] / sum * v[j][c];
      z[t][c] = acc;
    }
  }
}

class QuantizedPass {
 public:
  QuantizedPass(const DecoderConfig& cfg, DecoderRun& run) : cfg_(cfg), run_(run) {}

  QuantizedTensor quantize(const Tensor& t, PrecisionClass cls) {
    QuantConfig qc;
    qc.k = cfg_.block_size;
    qc.n = cfg_.outliers_per_block;
    qc.b = cls == PrecisionClass::kLow ? cfg_.profile.a_low : cfg_.profile.a_high;
    QuantizedTensor q = quantize_tensor(t, qc);
    run_.quantizer_blocks += q.blocks.size();
    return q;
  }

  Tensor project(LayerName name, const QuantizedTensor& x, const QuantizedMatrix& w) {
    const LayerSpec& spec = record(name);
    Tensor y({x.rows(), w.rows});
    const size_t bpr = x.blocks_per_row();
    for (size_t t = 0; t < x.rows(); ++t) {
      const auto blocks = std::span<const MxBlock>(x.blocks).subspan(t * bpr, bpr);
      const auto outs = core_mxv(w, blocks, *spec.mode, cfg_.profile);
      auto yr = y.row(t);
      for (size_t o = 0; o < outs.size(); ++o) yr[o] = outs[o].value;
      count(name, sum_counters(outs));
    }
    return y;
  }

  Tensor attention(const QuantizedTensor& q, const QuantizedTensor& k, const QuantizedTensor& v) {
    const LayerSpec& qk = record(LayerName::kAttnQk);
    record(LayerName::kAttnV);
    const size_t seq = q.rows();
    const size_t bpr = q.blocks_per_row();
    const float inv_sqrt = static_cast<float>(1.0 / std::sqrt(static_cast<double>(cfg_.d_k)));
    Tensor z({seq, cfg_.d_model});
    for (size_t h = 0; h < cfg_.heads; ++h) {
      const size_t c0 = h * cfg_.d_k;
      const size_t c1 = c0 + cfg_.d_k;
      for (size_t t = 0; t < seq; ++t) {
        std::vector<float> scores(t + 1);
        const auto q_blocks = std::span<const MxBlock>(q.blocks).subspan(t * bpr, bpr);
        for (size_t j = 0; j <= t; ++j) {
          const auto k_blocks = std::span<const MxBlock>(k.blocks).subspan(j * bpr, bpr);
          const CoreOutput s = core_dot(q_blocks, k_blocks, c0, c1, *qk.mode, cfg_.profile);
          scores[j] = s.value * inv_sqrt;
          count(LayerName::kAttnQk, s.counters);
        }
        const AttnRow attn = log2_softmax_hw(scores, cfg_.effective_attn_bits());
        ++run_.softmax_rows;
        run_.softmax_elements += scores.size();
        run_.softmax_clipped_positive += attn.clipped_positive;
        const ShiftAccumulateResult zr = attn_shift_accumulate(attn, v, c0, c1);
        run_.shift_ops += zr.shift_ops;
        std::copy(zr.values.begin(), zr.values.end(), z.row(t).begin() + static_cast<std::ptrdiff_t>(c0));
      }
    }
    return z;
  }

 private:
  const LayerSpec& record(LayerName name) {
    const LayerSpec& spec = layer_spec(name);
    run_.executed.push_back(spec);
    return spec;
  }
  void count(LayerName name, const OpCounters& c) {
    run_.layer_counters[index_of(name)] += c;
    run_.counters += c;
  }

  const DecoderConfig& cfg_;
  DecoderRun& run_;
};

Tensor bypass_attention(const DecoderConfig& cfg, const Tensor& q, const Tensor& k, const Tensor& v) {
  const size_t seq = q.outer();
  const float inv_sqrt = static_cast<float>(1.0 / std::sqrt(static_cast<double>(cfg.d_k)));
  Tensor z({seq, cfg.d_model});
  for (size_t h = 0; h < cfg.heads; ++h) {
    const size_t c0 = h * cfg.d_k;
    const size_t c1 = c0 + cfg.d_k;
    for (size_t t = 0; t < seq; ++t) {
      std::vector<float> p(t + 1);
      for (size_t j = 0; j <= t; ++j) {
        float acc = 0.0f;
        for (size_t c = c0; c < c1; ++c) acc += q.row(t)[c] * k.row(j)[c];
        p[j] = acc * inv_sqrt;
      }
      const float max = *std::max_element(p.begin(), p.end());
      float sum = 0.0f;
      for (float& e : p) sum += (e = std::exp(e - max));
      for (size_t c = c0; c < c1; ++c) {
        float acc = 0.0f;
        for (size_t j = 0; j <= t; ++j) acc += p[j] / sum * v.row(j)[c];
        z.row(t)[c] = acc;
      }
    }
  }
  return z;
}

Tensor silu_rows(const Tensor& x) {
  Tensor out(x.dims());
  for (size_t i = 0; i < x.numel(); ++i) out[i] = static_cast<float>(silu(x[i]));
  return out;
}

}  // namespace

const char* to_string(LayerName name) {
  switch (name) {
    case LayerName::kQProj: return "q_proj";
    case LayerName::kKProj: return "k_proj";
    case LayerName::kVProj: return "v_proj";
    case LayerName::kOProj: return "o_proj";
    case LayerName::kAttnQk: return "attn_qk";
    case LayerName::kAttnV: return "attn_v";
    case LayerName::kFfnFc1: return "ffn_fc1";
    case LayerName::kFfnFc2: return "ffn_fc2";
  }
  return "?";
}

const LayerSpec& layer_spec(LayerName name) { return kLayerSpecs[index_of(name)]; }

void validate(const DecoderConfig& cfg) {
  auto fail = [](const std::string& field, const std::string& why) { throw ConfigError(field + ": " + why); };
  validate(cfg.profile);
  if (cfg.block_size == 0 || cfg.block_size > 256) fail("block_size", "must lie in [1, 256]");
  if (cfg.outliers_per_block >= cfg.block_size) fail("outliers_per_block", "must be smaller than block_size");
  if (cfg.d_k == 0) fail("d_k", "must be positive");
  if (cfg.heads == 0) fail("heads", "must be positive");
  if (cfg.d_model == 0 || cfg.d_model % cfg.block_size != 0) fail("d_model", "must be a positive multiple of block_size");
  if (cfg.d_model != cfg.heads * cfg.d_k) fail("d_model", "must equal heads * d_k");
  if (cfg.effective_ffn_dim() % cfg.block_size != 0) fail("ffn_dim", "must be a multiple of block_size");
  if (cfg.seq_len == 0) fail("seq_len", "must be positive");
  if (!(cfg.weight_bf16_fraction >= 0.0 && cfg.weight_bf16_fraction < 1.0)) {
    fail("weight_bf16_fraction", "must lie in [0, 1)");
  }
  if (cfg.attn_bits != 0) {
    try {
      validate_attn_bits(cfg.attn_bits);
    } catch (const ConfigError& e) {
      fail("attn_bits", e.what());
    }
  }
  if (!(cfg.input_outlier_rate >= 0.0 && cfg.input_outlier_rate <= 1.0)) {
    fail("input_outlier_rate", "must lie in [0, 1]");
  }
  if (!(cfg.input_outlier_multiplier >= 1.0)) fail("input_outlier_multiplier", "must be >= 1");
}

DecoderWeights make_weights(const DecoderConfig& cfg) {
  validate(cfg);
  const size_t d = cfg.d_model;
  const size_t f = cfg.effective_ffn_dim();
  return {gaussian_matrix(d, d, derive_seed(cfg.seed, 1)), gaussian_matrix(d, d, derive_seed(cfg.seed, 2)),
          gaussian_matrix(d, d, derive_seed(cfg.seed, 3)), gaussian_matrix(d, d, derive_seed(cfg.seed, 4)),
          gaussian_matrix(f, d, derive_seed(cfg.seed, 5)), gaussian_matrix(d, f, derive_seed(cfg.seed, 6))};
}

Tensor make_input(const DecoderConfig& cfg) {
  validate(cfg);
  SyntheticSpec spec;
  spec.outlier_rate = cfg.input_outlier_rate;
  spec.outlier_multiplier = cfg.input_outlier_multiplier;
  spec.seed = derive_seed(cfg.seed, 0);
  return generate_synthetic(spec, {cfg.seq_len, cfg.d_model});
}

FidelityMetrics compare_outputs(const Tensor& output, const Tensor& reference, const Tensor& input) {
  if (output.dims() != reference.dims() || input.dims() != output.dims()) {
    throw ConfigError("compare_outputs: shape mismatch");
  }
  auto cosine = [](auto&& a, auto&& b, size_t n) {
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (size_t i = 0; i < n; ++i) {
      dot += a(i) * b(i);
      na += a(i) * a(i);
      nb += b(i) * b(i);
    }
    if (na == 0.0 && nb == 0.0) return 1.0;
    if (na == 0.0 || nb == 0.0) return 0.0;
    return dot / std::sqrt(na * nb);
  };
  const size_t n = output.numel();
  auto out = [&](size_t i) { return static_cast<double>(output[i]); };
  auto ref = [&](size_t i) { return static_cast<double>(reference[i]); };
  auto dout = [&](size_t i) { return static_cast<double>(output[i]) - input[i]; };
  auto dref = [&](size_t i) { return static_cast<double>(reference[i]) - input[i]; };

  FidelityMetrics m;
  m.cosine_similarity = cosine(out, ref, n);
  m.delta_cosine_similarity = cosine(dout, dref, n);
  double err = 0.0, norm = 0.0;
  for (size_t i = 0; i < n; ++i) {
    err += (out(i) - ref(i)) * (out(i) - ref(i));
    norm += ref(i) * ref(i);
  }
  m.relative_l2_error = norm == 0.0 ? std::sqrt(err) : std::sqrt(err / norm);
  return m;
}

Tensor reference_decoder_block(const DecoderConfig& cfg, const DecoderWeights& w, const Tensor& input) {
  const Matrix x = to_matrix(input);
  Matrix h(x.size());
  for (size_t t = 0; t < x.size(); ++t) h[t] = layer_norm(x[t]);
  const Matrix q = matmul_t(h, w.wq);
  const Matrix k = matmul_t(h, w.wk);
  const Matrix v = matmul_t(h, w.wv);
  Matrix z(x.size(), std::vector<double>(cfg.d_model, 0.0));
  for (size_t hd = 0; hd < cfg.heads; ++hd) {
    reference_attention(q, k, v, hd * cfg.d_k, (hd + 1) * cfg.d_k, z);
  }
  const Matrix o = matmul_t(z, w.wo);
  Matrix x1 = x;
  for (size_t t = 0; t < x.size(); ++t) {
    for (size_t c = 0; c < cfg.d_model; ++c) x1[t][c] += o[t][c];
  }
  Matrix h2(x.size());
  for (size_t t = 0; t < x.size(); ++t) h2[t] = layer_norm(x1[t]);
  Matrix f = matmul_t(h2, w.w1);
  for (auto& row : f) {
    for (double& e : row) e = silu(e);
  }
  const Matrix f2 = matmul_t(f, w.w2);
  for (size_t t = 0; t < x.size(); ++t) {
    for (size_t c = 0; c < cfg.d_model; ++c) x1[t][c] += f2[t][c];
  }
  return to_tensor(x1);
}

DecoderRun run_decoder_block(const DecoderConfig& cfg, const DecoderWeights& w, const Tensor& input) {
  validate(cfg);
  if (input.ndim() != 2 || input.dims()[1] != cfg.d_model) {
    throw ConfigError("input: expected [seq, " + std::to_string(cfg.d_model) + "], got " +
                      dims_to_string(input.dims()));
  }
  DecoderRun run;
  run.reference = reference_decoder_block(cfg, w, input);

  const Tensor h = layer_norm_rows(input);
  if (cfg.bypass) {
    for (LayerName n : {LayerName::kQProj, LayerName::kKProj, LayerName::kVProj, LayerName::kAttnQk,
                        LayerName::kAttnV, LayerName::kOProj, LayerName::kFfnFc1, LayerName::kFfnFc2}) {
      run.executed.push_back(layer_spec(n));
    }
    const Tensor q = matmul_t_float(h, w.wq);
    const Tensor k = matmul_t_float(h, w.wk);
    const Tensor v = matmul_t_float(h, w.wv);
    const Tensor x1 = add(input, matmul_t_float(bypass_attention(cfg, q, k, v), w.wo));
    const Tensor f = silu_rows(matmul_t_float(layer_norm_rows(x1), w.w1));
    run.output = add(x1, matmul_t_float(f, w.w2));
    run.fidelity = compare_outputs(run.output, run.reference, input);
    return run;
  }

  const PrecisionProfile& p = cfg.profile;
  const size_t k = cfg.block_size;
  auto quantize_w = [&](const Tensor& m) {
    return quantize_weights(m, p.w_bits, select_bf16_columns(m, cfg.weight_bf16_fraction), k);
  };
  const QuantizedMatrix wq = quantize_w(w.wq);
  const QuantizedMatrix wk = quantize_w(w.wk);
  const QuantizedMatrix wv = quantize_w(w.wv);
  const QuantizedMatrix wo = quantize_w(w.wo);
  const QuantizedMatrix w1 = quantize_w(w.w1);
  const QuantizedMatrix w2 = quantize_w(w.w2);

  QuantizedPass pass(cfg, run);
  const QuantizedTensor hq = pass.quantize(h, PrecisionClass::kLow);
  const Tensor q = pass.project(LayerName::kQProj, hq, wq);
  const Tensor kk = pass.project(LayerName::kKProj, hq, wk);
  const Tensor v = pass.project(LayerName::kVProj, hq, wv);
  const QuantizedTensor qq = pass.quantize(q, PrecisionClass::kHigh);
  const QuantizedTensor kq = pass.quantize(kk, PrecisionClass::kHigh);
  const QuantizedTensor vq = pass.quantize(v, PrecisionClass::kHigh);
  const Tensor z = pass.attention(qq, kq, vq);
  const Tensor o = pass.project(LayerName::kOProj, pass.quantize(z, PrecisionClass::kHigh), wo);
  const Tensor x1 = add(input, o);
  const QuantizedTensor h2 = pass.quantize(layer_norm_rows(x1), PrecisionClass::kLow);
  const Tensor f = silu_rows(pass.project(LayerName::kFfnFc1, h2, w1));
  const Tensor f2 = pass.project(LayerName::kFfnFc2, pass.quantize(f, PrecisionClass::kHigh), w2);
  run.output = add(x1, f2);
  run.fidelity = compare_outputs(run.output, run.reference, input);
  return run;
}

DecoderRun run_decoder_block(const DecoderConfig& cfg) {
  return run_decoder_block(cfg, make_weights(cfg), make_input(cfg));
}

const Traffic& TraceCounts::traffic(Scheme s) const {
  switch (s) {
    case Scheme::kOpal: return opal;
    case Scheme::kOwq: return owq;
    case Scheme::kBf16: return bf16;
  }
  return opal;
}

size_t bf16_column_count(const DecoderConfig& cfg, size_t fan_in) {
  return static_cast<size_t>(std::llround(cfg.weight_bf16_fraction * static_cast<double>(fan_in)));
}

TraceCounts run_generation_trace(const DecoderConfig& cfg, size_t n_tokens) {
  validate(cfg);
  if (n_tokens == 0) {
    throw ConfigError("n_tokens: must be >= 1");
  }
  const CoreGeometry geo;
  const PrecisionProfile& p = cfg.profile;
  const uint64_t k = cfg.block_size;
  const uint64_t n = cfg.outliers_per_block;
  const uint64_t d = cfg.d_model;
  const uint64_t ffn = cfg.effective_ffn_dim();
  auto blocks = [&](uint64_t len) { return ceil_div(len, k); };

  TraceCounts tc;
  tc.profile = p.name;
  tc.n_tokens = n_tokens;
  auto add_counts = [&](LayerName name, const OpCounters& c) {
    tc.layer_counters[index_of(name)] += c;
    tc.counters += c;
  };
  auto mxv = [&](LayerName name, uint64_t out, uint64_t in) {
    const MuMode mode = *layer_spec(name).mode;
    const uint64_t fp_row = std::min<uint64_t>(in, n * blocks(in) + bf16_column_count(cfg, in));
    OpCounters c;
    c.int_macs[static_cast<size_t>(mode)] = out * (in - fp_row);
    c.fp_macs = out * fp_row;
    c.cycles[static_cast<size_t>(mode)] = out * (ceil_div(blocks(in), geo.lanes) * geo.cycles_per_pass(mode));
    c.lane_passes = out * blocks(in);
    c.lane_busy_cycles = c.lane_passes * geo.cycles_per_pass(mode);
    add_counts(name, c);
  };

  // Encoded sizes in bits.
  auto act_bits = [&](Scheme s, uint64_t len, int b) -> double {
    if (s != Scheme::kOpal) return 16.0 * static_cast<double>(len);
    return static_cast<double>(blocks(len) * ((k - n) * static_cast<uint64_t>(b) + 16 * n + 4));
  };
  auto weight_bits = [&](Scheme s, uint64_t out, uint64_t in) -> double {
    if (s == Scheme::kBf16) return 16.0 * static_cast<double>(out * in);
    const uint64_t c = bf16_column_count(cfg, in);
    return static_cast<double>(out * ((in - c) * static_cast<uint64_t>(p.w_bits) + 16 * c + 8 * blocks(in)));
  };

  const uint64_t fp_qk_per_head = std::min<uint64_t>(cfg.d_k, (2 * n * cfg.d_k + k / 2) / k);
  for (size_t i = 0; i < n_tokens; ++i) {
    const uint64_t kv_len = cfg.seq_len + i + 1;
    mxv(LayerName::kQProj, d, d);
    mxv(LayerName::kKProj, d, d);
    mxv(LayerName::kVProj, d, d);
    OpCounters qk;
    for (size_t h = 0; h < cfg.heads; ++h) {
      const uint64_t first = h * cfg.d_k / k;
      const uint64_t last = ((h + 1) * cfg.d_k - 1) / k;
      const uint64_t touched = last - first + 1;
      qk.int_macs[static_cast<size_t>(MuMode::kHighHigh)] += kv_len * (cfg.d_k - fp_qk_per_head);
      qk.fp_macs += kv_len * fp_qk_per_head;
      qk.cycles[static_cast<size_t>(MuMode::kHighHigh)] +=
          kv_len * ceil_div(touched, geo.lanes) * geo.cycles_per_pass(MuMode::kHighHigh);
      qk.lane_passes += kv_len * touched;
      qk.lane_busy_cycles += kv_len * touched * geo.cycles_per_pass(MuMode::kHighHigh);
    }
    add_counts(LayerName::kAttnQk, qk);
    tc.softmax_rows += cfg.heads;
    tc.softmax_elements += cfg.heads * kv_len;
    tc.shift_ops += kv_len * d;
    mxv(LayerName::kOProj, d, d);
    mxv(LayerName::kFfnFc1, ffn, d);
    mxv(LayerName::kFfnFc2, d, ffn);
    // Quantized vectors: h, q, k, v, z, h2 (d each) and the FFN hidden (ffn).
    tc.quantizer_blocks += 6 * blocks(d) + blocks(ffn);

    for (Scheme s : {Scheme::kOpal, Scheme::kOwq, Scheme::kBf16}) {
      Traffic& tr = s == Scheme::kOpal ? tc.opal : (s == Scheme::kOwq ? tc.owq : tc.bf16);
      tr.weight_bytes += (4 * weight_bits(s, d, d) + weight_bits(s, ffn, d) + weight_bits(s, d, ffn)) / 8.0;
      // Written then read once: h, q, z, h2 (d) and the FFN hidden; k and v are
      // written into the cache and read back kv_len times below.
      const double low_d = act_bits(s, d, p.a_low);
      const double high_d = act_bits(s, d, p.a_high);
      tr.activation_bytes += (2 * (2 * low_d + 2 * high_d + act_bits(s, ffn, p.a_high)) + 2 * high_d) / 8.0;
      tr.kv_bytes += 2.0 * static_cast<double>(kv_len) * high_d / 8.0;
    }
  }

  for (Scheme s : {Scheme::kOpal, Scheme::kOwq, Scheme::kBf16}) {
    Traffic& tr = s == Scheme::kOpal ? tc.opal : (s == Scheme::kOwq ? tc.owq : tc.bf16);
    const double largest_weights = std::max(weight_bits(s, ffn, d), weight_bits(s, d, ffn)) / 8.0;
    const double cache = 2.0 * static_cast<double>(cfg.seq_len + n_tokens) * act_bits(s, d, p.a_high) / 8.0;
    tr.footprint_bytes = largest_weights + cache + act_bits(s, ffn, p.a_high) / 8.0;
  }
  return tc;
}

}  // namespace opal
