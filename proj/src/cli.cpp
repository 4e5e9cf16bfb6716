#include "opal/cli.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "opal/cost_model.hpp"
#include "opal/error.hpp"
#include "opal/kv_file.hpp"
#include "opal/log2_softmax.hpp"
#include "opal/manifest.hpp"
#include "opal/mx_format.hpp"
#include "opal/mx_quant.hpp"
#include "opal/rng.hpp"
#include "opal/synthetic.hpp"
#include "opal/tensor_io.hpp"

namespace opal {
namespace {

// ---------------------------------------------------------------------------
// Shared option groups

struct TensorSource {
  std::string input;
  std::string distribution = "gaussian";
  size_t rows = 8;
  size_t cols = 1024;
  double scale = 1.0;
  double outlier_rate = 4.0 / 128.0;
  double outlier_multiplier = 64.0;
};

void add_tensor_source(CLI::App* cmd, TensorSource& src) {
  cmd->add_option("--input", src.input, "Tensor file (OPTN binary, or .csv with one value per line)");
  cmd->add_option("--distribution", src.distribution, "Synthetic bulk when no --input: gaussian or lognormal")
      ->check(CLI::IsMember({"gaussian", "lognormal"}));
  cmd->add_option("--rows", src.rows, "Synthetic rows")->check(CLI::Range(size_t{1}, size_t{1} << 16));
  cmd->add_option("--cols", src.cols, "Synthetic columns")->check(CLI::Range(size_t{1}, size_t{1} << 20));
  cmd->add_option("--scale", src.scale, "Synthetic bulk spread, > 0")->check(CLI::PositiveNumber);
  cmd->add_option("--outlier-rate", src.outlier_rate, "Outliers per element in [0, 1]")->check(CLI::Range(0.0, 1.0));
  cmd->add_option("--outlier-multiplier", src.outlier_multiplier, "Outlier magnitude over the bulk, >= 1")
      ->check(CLI::Range(1.0, 1e6));
}

struct Source {
  std::string name;
  Tensor tensor;
};

Source load_source(const TensorSource& src, uint64_t seed) {
  if (!src.input.empty()) {
    const std::filesystem::path p(src.input);
    return {p.stem().string(), load_tensor_any(p)};
  }
  SyntheticSpec spec;
  spec.distribution = src.distribution == "lognormal" ? Distribution::kLogNormal : Distribution::kGaussian;
  spec.scale = src.scale;
  spec.outlier_rate = src.outlier_rate;
  spec.outlier_multiplier = src.outlier_multiplier;
  spec.seed = seed;
  return {"synthetic_" + src.distribution, generate_synthetic(spec, {src.rows, src.cols})};
}

void add_rounding(CLI::App* cmd, std::string& rounding) {
  cmd->add_option("--rounding", rounding, "Code rounding: half-away or half-even")
      ->check(CLI::IsMember({"half-away", "half-even"}));
}

CodeRounding parse_rounding(const std::string& s) {
  return s == "half-even" ? CodeRounding::kHalfToEven : CodeRounding::kHalfAwayFromZero;
}

void emit(const std::string& text, const std::string& path, std::ostream& out) {
  if (path.empty()) {
    out << text;
    return;
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path + " for writing");
  f << text;
  if (!f) throw IoError("failed writing " + path);
}

std::string ratio(double num, double den) {
  if (den == 0.0) return num == 0.0 ? "nan" : "inf";
  return format_double(num / den);
}

// Blocks of k along the innermost dimension, the last one of a row possibly
// short; visits (row, block, values).
template <typename F>
void for_each_block(const Tensor& t, size_t k, F&& f) {
  const size_t inner = t.inner();
  for (size_t r = 0; r < t.outer(); ++r) {
    const auto row = t.row(r);
    for (size_t c = 0; c * k < inner; ++c) {
      const size_t len = std::min(k, inner - c * k);
      f(r, c, row.subspan(c * k, len));
    }
  }
}

std::vector<float> padded(std::span<const float> values, size_t k) {
  std::vector<float> v(k, 0.0f);
  std::copy(values.begin(), values.end(), v.begin());
  return v;
}

double mxopal_block_mse(std::span<const float> values, const QuantConfig& cfg) {
  const auto v = padded(values, cfg.k);
  const auto deq = quantize_block_mxopal(v, cfg).dequantize();
  return block_mse(values, std::span<const float>(deq).first(values.size()));
}

double mxint_block_mse(std::span<const float> values, int b, CodeRounding r) {
  return block_mse(values, quantize_block_mxint(values, b, r).dequantize());
}

double minmax_block_mse(std::span<const float> values, int b) {
  return block_mse(values, quantize_block_minmax(values, b).dequantize());
}

// ---------------------------------------------------------------------------
// quantize

struct QuantizeArgs {
  TensorSource src;
  size_t k = 128;
  size_t n = 4;
  int b = 8;
  std::string rounding = "half-away";
  std::string out;
  std::string summary;
};

int cmd_quantize(const QuantizeArgs& a, uint64_t seed, std::ostream& out) {
  QuantConfig cfg;
  cfg.k = a.k;
  cfg.n = a.n;
  cfg.b = a.b;
  cfg.rounding = parse_rounding(a.rounding);
  validate(cfg);
  const Source s = load_source(a.src, seed);
  const QuantizedTensor q = quantize_tensor(s.tensor, cfg);
  if (!a.out.empty()) save_quantized(q, a.out);

  const Tensor deq = dequantize(q);
  double sum = 0.0;
  double worst = 0.0;
  double sum_mxint = 0.0;
  size_t blocks = 0;
  for_each_block(s.tensor, cfg.k, [&](size_t r, size_t c, std::span<const float> v) {
    const double m = block_mse(v, deq.row(r).subspan(c * cfg.k, v.size()));
    sum += m;
    worst = std::max(worst, m);
    sum_mxint += mxint_block_mse(v, cfg.b, cfg.rounding);
    ++blocks;
  });
  const MemoryOverhead oh = memory_overhead(cfg);
  std::ostringstream os;
  os << std::fixed;
  os.precision(2);
  os << "overhead_percent=" << oh.percent() << "\n";
  KvFile kv;
  kv.set("tensor", s.name);
  kv.set("dims", dims_to_string(s.tensor.dims()));
  kv.set("k", static_cast<uint64_t>(cfg.k));
  kv.set("n", static_cast<uint64_t>(cfg.n));
  kv.set("b", cfg.b);
  kv.set("overhead_numerator", oh.numerator);
  kv.set("overhead_denominator", oh.denominator);
  kv.set("overhead_ratio", oh.ratio());
  kv.set("global_scale_exp", q.global_scale_exp);
  kv.set("blocks", static_cast<uint64_t>(blocks));
  kv.set("mse_mean", sum / static_cast<double>(blocks));
  kv.set("mse_max", worst);
  kv.set("mse_mxint_mean", sum_mxint / static_cast<double>(blocks));
  const std::string text = os.str() + kv.to_string();
  if (!a.summary.empty()) emit(text, a.summary, out);
  out << text;
  return kExitOk;
}

// ---------------------------------------------------------------------------
// sweep-mse

struct SweepArgs {
  TensorSource src;
  size_t k = 128;
  std::string n_list = "0,1,2,4,8";
  std::string b_list = "4,8";
  std::string rounding = "half-away";
  bool per_block = false;
  std::string out;
};

int cmd_sweep_mse(const SweepArgs& a, uint64_t seed, std::ostream& out) {
  const auto ns = parse_int_list(a.n_list, "n");
  const auto bs = parse_int_list(a.b_list, "b");
  for (long long n : ns) {
    QuantConfig c;
    c.k = a.k;
    c.n = static_cast<size_t>(std::max(0LL, n));
    if (n < 0) throw ConfigError("n: must be >= 0");
    for (long long b : bs) {
      c.b = static_cast<int>(b);
      if (b < kMinCodeBits || b > kMaxCodeBits) throw ConfigError("b: must be in [2, 16]");
      validate(c);
    }
  }
  const CodeRounding rounding = parse_rounding(a.rounding);
  const Source s = load_source(a.src, seed);

  std::string csv =
      "tensor,n,b,mse_mxopal,mse_mxint,mse_minmax,ratio_mxopal_minmax,ratio_mxint_minmax,ratio_mxopal_mxint\n";
  auto row = [&](const std::string& name, long long n, long long b, double opal, double mxint, double minmax) {
    csv += name + "," + std::to_string(n) + "," + std::to_string(b) + "," + format_double(opal) + "," +
           format_double(mxint) + "," + format_double(minmax) + "," + ratio(opal, minmax) + "," +
           ratio(mxint, minmax) + "," + ratio(opal, mxint) + "\n";
  };
  for (long long b : bs) {
    for (long long n : ns) {
      QuantConfig cfg;
      cfg.k = a.k;
      cfg.n = static_cast<size_t>(n);
      cfg.b = static_cast<int>(b);
      cfg.rounding = rounding;
      double so = 0.0;
      double si = 0.0;
      double sm = 0.0;
      size_t count = 0;
      std::string block_rows;
      for_each_block(s.tensor, cfg.k, [&](size_t r, size_t c, std::span<const float> v) {
        const double mo = mxopal_block_mse(v, cfg);
        const double mi = mxint_block_mse(v, cfg.b, rounding);
        const double mm = minmax_block_mse(v, cfg.b);
        so += mo;
        si += mi;
        sm += mm;
        if (a.per_block) {
          const std::string name = s.name + "#" + std::to_string(r * ((s.tensor.inner() + cfg.k - 1) / cfg.k) + c);
          std::swap(csv, block_rows);
          row(name, n, b, mo, mi, mm);
          std::swap(csv, block_rows);
        }
        ++count;
      });
      const auto d = static_cast<double>(count);
      row(s.name, n, b, so / d, si / d, sm / d);
      csv += block_rows;
    }
  }
  emit(csv, a.out, out);
  return kExitOk;
}

// ---------------------------------------------------------------------------
// softmax-eval

struct SoftmaxArgs {
  size_t trials = 1000;
  size_t length = 0;
  size_t min_length = 1;
  size_t max_length = 512;
  int bits = 7;
  double score_scale = 2.0;
  std::string pattern = "gaussian";
  std::string out;
};

int cmd_softmax_eval(const SoftmaxArgs& a, uint64_t seed, std::ostream& out) {
  validate_attn_bits(a.bits);
  size_t lo = a.min_length;
  size_t hi = a.max_length;
  if (a.length != 0) lo = hi = a.length;
  if (lo == 0 || lo > hi) throw ConfigError("min-length/max-length: need 1 <= min <= max");
  if (a.trials == 0) throw ConfigError("trials: must be >= 1");

  Rng rng(seed);
  std::string csv =
      "trial,length,max_abs_dev,disagreements,disagreement_rate,sum_pow_hw,sum_pow_exact,clipped_positive_hw\n";
  std::vector<float> scores;
  for (size_t t = 0; t < a.trials; ++t) {
    const size_t len = lo + static_cast<size_t>(rng.below(hi - lo + 1));
    scores.resize(len);
    if (a.pattern == "uniform") {
      std::fill(scores.begin(), scores.end(), static_cast<float>(a.score_scale * rng.normal()));
    } else {
      for (float& x : scores) x = static_cast<float>(a.score_scale * rng.normal());
    }
    const AttnRow hw = log2_softmax_hw(scores, a.bits);
    const AttnRow ex = log2_softmax_exact(scores, a.bits);
    uint32_t dev = 0;
    size_t diff = 0;
    double pow_hw = 0.0;
    double pow_ex = 0.0;
    for (size_t i = 0; i < len; ++i) {
      const uint32_t d = hw.shifts[i] > ex.shifts[i] ? hw.shifts[i] - ex.shifts[i] : ex.shifts[i] - hw.shifts[i];
      dev = std::max(dev, d);
      diff += d != 0;
      pow_hw += hw.weight(i);
      pow_ex += ex.weight(i);
    }
    csv += std::to_string(t) + "," + std::to_string(len) + "," + std::to_string(dev) + "," + std::to_string(diff) +
           "," + format_double(static_cast<double>(diff) / static_cast<double>(len)) + "," + format_double(pow_hw) +
           "," + format_double(pow_ex) + "," + std::to_string(hw.clipped_positive) + "\n";
  }
  emit(csv, a.out, out);
  return kExitOk;
}

// ---------------------------------------------------------------------------
// simulate

struct SimulateArgs {
  std::string config;
  bool bypass = false;
  std::optional<std::string> profile;
  std::optional<size_t> trace_tokens;
  std::string out;
};

int cmd_simulate(const SimulateArgs& a, std::optional<uint64_t> seed, std::ostream& out) {
  KvFile kv = a.config.empty() ? KvFile{} : KvFile::load(a.config);
  SimulationConfig cfg = simulation_config_from_kv(kv);
  if (seed) cfg.decoder.seed = *seed;
  if (a.bypass) cfg.decoder.bypass = true;
  if (a.profile) {
    try {
      cfg.decoder.profile = PrecisionProfile::from_name(*a.profile);
    } catch (const ConfigError& e) {
      throw ConfigError(std::string("profile: ") + e.what());
    }
  }
  if (a.trace_tokens) cfg.trace_tokens = *a.trace_tokens;
  validate(cfg.decoder);
  const DecoderRun run = run_decoder_block(cfg.decoder);
  const TraceCounts trace = run_generation_trace(cfg.decoder, cfg.trace_tokens);
  emit(simulation_manifest(cfg, run, trace).to_string(), a.out, out);
  return kExitOk;
}

// ---------------------------------------------------------------------------
// cost

struct CostArgs {
  std::string manifest;
  std::string config;
  bool area = false;
  std::string out;
};

int cmd_cost(const CostArgs& a, std::ostream& out) {
  const UnitCosts costs = a.config.empty() ? UnitCosts{} : load_unit_costs(a.config);
  validate(costs);
  std::string csv;
  if (!a.manifest.empty()) {
    const TraceCounts trace = trace_from_kv(KvFile::load(a.manifest));
    std::vector<CostReport> reports;
    for (Scheme s : {Scheme::kOpal, Scheme::kOwq, Scheme::kBf16}) reports.push_back(estimate(trace, costs, s));
    csv = cost_csv(reports);
  }
  if (a.area || a.manifest.empty()) {
    if (csv.empty()) csv = "component,energy_J,area_um2,percent\n";
    for (const AreaRow& r : area_report(costs)) {
      csv += "area." + r.component + ",0," + format_double(r.area_um2) + "," + format_double(r.area_percent) + "\n";
    }
    for (const AreaRow& r : area_report(costs)) {
      csv += "power_mw." + r.component + ",0," + format_double(r.power_mw) + "," + format_double(r.power_percent) +
             "\n";
    }
  }
  emit(csv, a.out, out);
  return kExitOk;
}

// Turns a key=value file into "--key=value" arguments placed before the
// user's own flags, so explicit flags win.
std::vector<std::string> expand_config(const std::vector<std::string>& args) {
  if (args.empty()) return args;
  const std::string& sub = args.front();
  if (sub != "quantize" && sub != "sweep-mse" && sub != "softmax-eval") return args;
  std::optional<std::string> path;
  for (size_t i = 1; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) path = args[i + 1];
    if (args[i].rfind("--config=", 0) == 0) path = args[i].substr(9);
  }
  if (!path) return args;
  std::vector<std::string> expanded{sub};
  const KvFile file = KvFile::load(*path);
  for (const auto& [key, value] : file.entries()) {
    if (key == "config") throw ConfigError("config: cannot nest config files");
    if (value == "true" || value == "false") {
      if (value == "true") expanded.push_back("--" + key);
      continue;
    }
    expanded.push_back("--" + key + "=" + value);
  }
  expanded.insert(expanded.end(), args.begin() + 1, args.end());
  return expanded;
}

}  // namespace

std::vector<long long> parse_int_list(const std::string& text, const std::string& what) {
  std::vector<long long> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      size_t used = 0;
      out.push_back(std::stoll(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw ConfigError(what + ": expected comma-separated integers, got \"" + text + "\"");
    }
  }
  if (out.empty()) throw ConfigError(what + ": empty list");
  return out;
}

int run_cli(const std::vector<std::string>& raw_args, std::ostream& out, std::ostream& err) {
  CLI::App app{"MX-OPAL quantization, log2 softmax and accelerator datapath experiments", "opal"};
  app.require_subcommand(1);
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);

  uint64_t seed = 0;
  std::string config;

  auto add_common = [&](CLI::App* cmd, std::string& out_path, const std::string& config_help) {
    cmd->add_option("--seed", seed, "64-bit seed for synthetic data");
    cmd->add_option("--out", out_path, "Output path (default: stdout)");
    cmd->add_option("--config", config, config_help);
  };

  QuantizeArgs qa;
  auto* quantize = app.add_subcommand("quantize", "Quantize a tensor to MX-OPAL and write an OPQT file");
  add_common(quantize, qa.out, "key=value file of quantize options");
  add_tensor_source(quantize, qa.src);
  quantize->add_option("--k", qa.k, "Block size, n < k <= 256")->check(CLI::Range(size_t{2}, size_t{256}));
  quantize->add_option("--n", qa.n, "Outliers per block, 0 <= n < k")->check(CLI::Range(size_t{0}, size_t{255}));
  quantize->add_option("--b", qa.b, "Code bits including sign, 2..16")->check(CLI::Range(2, 16));
  quantize->add_option("--summary", qa.summary, "Also write the summary to this path");
  add_rounding(quantize, qa.rounding);

  SweepArgs sa;
  auto* sweep = app.add_subcommand("sweep-mse", "Per-block MSE of MX-OPAL, MXINT and MinMax over an (n, b) grid");
  add_common(sweep, sa.out, "key=value file of sweep-mse options");
  add_tensor_source(sweep, sa.src);
  sweep->add_option("--k", sa.k, "Block size, 2..256")->check(CLI::Range(size_t{2}, size_t{256}));
  sweep->add_option("--n-list", sa.n_list, "Comma-separated outlier counts, each 0 <= n < k");
  sweep->add_option("--b-list", sa.b_list, "Comma-separated code widths, each 2..16");
  sweep->add_flag("--per-block", sa.per_block, "Emit one row per block after each summary row");
  add_rounding(sweep, sa.rounding);

  SoftmaxArgs xa;
  auto* softmax = app.add_subcommand("softmax-eval", "Compare the exponent/mantissa log2 softmax with the exact one");
  add_common(softmax, xa.out, "key=value file of softmax-eval options");
  softmax->add_option("--trials", xa.trials, "Rows to evaluate, 1..10^7")->check(CLI::Range(size_t{1}, size_t{10000000}));
  softmax->add_option("--length", xa.length, "Fixed row length (overrides the range), 1..65536")
      ->check(CLI::Range(size_t{1}, size_t{65536}));
  softmax->add_option("--min-length", xa.min_length, "Shortest row, 1..65536")->check(CLI::Range(size_t{1}, size_t{65536}));
  softmax->add_option("--max-length", xa.max_length, "Longest row, 1..65536")->check(CLI::Range(size_t{1}, size_t{65536}));
  softmax->add_option("--bits", xa.bits, "AttnQ bits, 1..7")->check(CLI::Range(1, kMaxAttnBits));
  softmax->add_option("--score-scale", xa.score_scale, "Standard deviation of gaussian scores, > 0")
      ->check(CLI::PositiveNumber);
  softmax->add_option("--pattern", xa.pattern, "gaussian rows, or uniform rows of one repeated score")
      ->check(CLI::IsMember({"gaussian", "uniform"}));

  SimulateArgs ma;
  std::string profile;
  size_t trace_tokens = 0;
  auto* simulate = app.add_subcommand("simulate", "Run a decoder block on the modeled datapath and write a manifest");
  add_common(simulate, ma.out, "Decoder config (key=value; see README)");
  simulate->add_flag("--bypass", ma.bypass, "Skip all quantization");
  auto* profile_opt = simulate->add_option("--profile", profile, "W3A3/5 or W4A4/7");
  auto* tokens_opt =
      simulate->add_option("--trace-tokens", trace_tokens, "Decode steps to trace, 1..65536")
          ->check(CLI::Range(size_t{1}, size_t{65536}));

  CostArgs ca;
  auto* cost = app.add_subcommand("cost", "Energy and area estimates from a simulate manifest");
  add_common(cost, ca.out, "Unit-cost overrides (key=value)");
  cost->add_option("--manifest", ca.manifest, "Manifest written by simulate");
  cost->add_flag("--area", ca.area, "Append area and power breakdown rows");

  try {
    const std::vector<std::string> args = expand_config(raw_args);
    std::vector<const char*> argv{"opal"};
    for (const auto& a : args) argv.push_back(a.c_str());
    try {
      app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::ParseError& e) {
      return app.exit(e, out, err) == 0 ? kExitOk : kExitConfig;
    }
    const bool seed_given = app.get_subcommands().front()->count("--seed") > 0;
    if (quantize->parsed()) return cmd_quantize(qa, seed, out);
    if (sweep->parsed()) return cmd_sweep_mse(sa, seed, out);
    if (softmax->parsed()) return cmd_softmax_eval(xa, seed, out);
    if (simulate->parsed()) {
      ma.config = config;
      if (profile_opt->count() > 0) ma.profile = profile;
      if (tokens_opt->count() > 0) ma.trace_tokens = trace_tokens;
      return cmd_simulate(ma, seed_given ? std::optional<uint64_t>(seed) : std::nullopt, out);
    }
    if (cost->parsed()) {
      ca.config = config;
      return cmd_cost(ca, out);
    }
    return kExitConfig;
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const IoError& e) {
    err << "error: " << e.what() << "\n";
    return kExitIo;
  } catch (const NumericError& e) {
    err << "error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitConfig;
  }
}

int run_cli(int argc, const char* const* argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run_cli(args, std::cout, std::cerr);
}

}  // namespace opal
