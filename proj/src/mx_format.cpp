#include "opal/mx_format.hpp"

#include "opal/bytes.hpp"
#include "opal/error.hpp"
#include "opal/tensor_io.hpp"

namespace opal {
namespace {

constexpr std::string_view kMagic = "OPQT";

size_t packed_size(size_t count, int b) { return (count * static_cast<size_t>(b) + 7) / 8; }

}  // namespace

std::vector<uint8_t> pack_codes(std::span<const int32_t> codes, int b) {
  std::vector<uint8_t> out(packed_size(codes.size(), b), 0);
  const uint32_t mask = (uint32_t{1} << b) - 1;
  size_t bit = 0;
  for (int32_t c : codes) {
    const uint32_t u = static_cast<uint32_t>(c) & mask;
    for (int i = 0; i < b; ++i, ++bit) {
      if ((u >> i) & 1u) out[bit / 8] |= static_cast<uint8_t>(1u << (bit % 8));
    }
  }
  return out;
}

std::vector<int32_t> unpack_codes(std::span<const uint8_t> packed, size_t count, int b) {
  std::vector<int32_t> out(count);
  size_t bit = 0;
  for (auto& c : out) {
    uint32_t u = 0;
    for (int i = 0; i < b; ++i, ++bit) {
      u |= static_cast<uint32_t>((packed[bit / 8] >> (bit % 8)) & 1u) << i;
    }
    // Sign-extend from b bits.
    const uint32_t sign = uint32_t{1} << (b - 1);
    c = static_cast<int32_t>((u ^ sign) - sign);
  }
  return out;
}

std::vector<uint8_t> encode_quantized(const QuantizedTensor& q) {
  const QuantConfig& cfg = q.config;
  validate(cfg);
  if (cfg.k > kMaxSerializedBlock) {
    throw ConfigError("OPQT stores outlier indices in 8 bits; k must be <= 256");
  }
  if (q.dims.empty() || q.dims.size() > 255) {
    throw ConfigError("OPQT needs 1..255 dims");
  }
  if (q.global_scale_exp < INT16_MIN || q.global_scale_exp > INT16_MAX) {
    throw ConfigError("global scale exponent does not fit 16 bits");
  }
  bytes::Writer w;
  w.put_raw(kMagic);
  w.put_u16(static_cast<uint16_t>(cfg.k));
  w.put_u16(static_cast<uint16_t>(cfg.n));
  w.put_u16(static_cast<uint16_t>(cfg.b));
  w.put_i16(static_cast<int16_t>(q.global_scale_exp));
  w.put_u8(static_cast<uint8_t>(q.dims.size()));
  for (size_t d : q.dims) w.put_u64(d);
  for (size_t i = 0; i < q.blocks.size(); ++i) {
    const MxBlock& blk = q.blocks[i];
    if (blk.outliers.size() != cfg.n || blk.codes.size() != cfg.k) {
      throw ConfigError("block " + std::to_string(i) + " does not match the tensor config");
    }
    w.put_u8(q.block_offsets[i] & 0x0F);
    const auto packed = pack_codes(blk.codes, cfg.b);
    w.buffer().insert(w.buffer().end(), packed.begin(), packed.end());
    for (const Outlier& o : blk.outliers) {
      w.put_u8(static_cast<uint8_t>(o.index));
      w.put_u16(o.value.bits());
    }
  }
  return w.take();
}

QuantizedTensor decode_quantized(std::span<const uint8_t> in) {
  bytes::Reader r(in);
  r.expect_magic(kMagic);
  r.require(9, LoadErrorKind::kTruncated, "header ends early");
  QuantizedTensor q;
  q.config.k = r.u16();
  q.config.n = r.u16();
  q.config.b = r.u16();
  q.global_scale_exp = r.i16();
  try {
    validate(q.config);
  } catch (const ConfigError& e) {
    throw LoadError(LoadErrorKind::kBadHeader, e.what());
  }
  if (q.config.k > kMaxSerializedBlock) {
    throw LoadError(LoadErrorKind::kBadHeader, "k exceeds 256");
  }
  const uint8_t ndim = r.u8();
  if (ndim == 0) throw LoadError(LoadErrorKind::kBadHeader, "ndim is 0");
  r.require(8u * ndim, LoadErrorKind::kTruncated, "dims end early");
  q.dims.resize(ndim);
  for (auto& d : q.dims) {
    d = static_cast<size_t>(r.u64());
    if (d == 0) throw LoadError(LoadErrorKind::kBadHeader, "zero-length dim");
  }
  const size_t total = q.rows() * q.blocks_per_row();
  const size_t code_bytes = packed_size(q.config.k, q.config.b);
  const size_t block_bytes = 1 + code_bytes + 3 * q.config.n;
  if (r.remaining() / block_bytes < total) {
    throw LoadError(LoadErrorKind::kTruncated, "expected " + std::to_string(total) + " blocks");
  }
  if (r.remaining() != total * block_bytes) {
    throw LoadError(LoadErrorKind::kBadHeader, "trailing bytes after last block");
  }
  q.block_offsets.resize(total);
  q.blocks.resize(total);
  for (size_t i = 0; i < total; ++i) {
    q.block_offsets[i] = r.u8() & 0x0F;
    MxBlock& blk = q.blocks[i];
    blk.bits = q.config.b;
    blk.scale_exp = q.global_scale_exp + q.block_offsets[i];
    blk.codes = unpack_codes(r.take(code_bytes), q.config.k, q.config.b);
    blk.outliers.resize(q.config.n);
    for (auto& o : blk.outliers) {
      o.index = r.u8();
      o.value = Bf16::from_bits(r.u16());
      if (o.index >= q.config.k) throw LoadError(LoadErrorKind::kBadHeader, "outlier index out of range");
      if (!o.value.is_finite()) throw LoadError(LoadErrorKind::kNonFinite, "outlier in block " + std::to_string(i));
    }
  }
  return q;
}

void save_quantized(const QuantizedTensor& q, const std::filesystem::path& path) {
  write_file(path, encode_quantized(q));
}

QuantizedTensor load_quantized(const std::filesystem::path& path) { return decode_quantized(read_file(path)); }

}  // namespace opal
