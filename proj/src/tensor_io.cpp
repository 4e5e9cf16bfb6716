#include "opal/tensor_io.hpp"

#include <cmath>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>

#include "opal/bytes.hpp"
#include "opal/error.hpp"

namespace opal {
namespace {

constexpr std::string_view kMagic = "OPTN";
constexpr uint8_t kDtypeF32 = 0;
constexpr size_t kMaxDims = 255;

}  // namespace

size_t tensor_header_size(size_t ndim) { return 4 + 2 + 1 + 1 + 8 * ndim; }

std::vector<uint8_t> encode_tensor(const Tensor& t) {
  if (t.ndim() == 0 || t.ndim() > kMaxDims) {
    throw ConfigError("cannot encode tensor with " + std::to_string(t.ndim()) + " dims");
  }
  bytes::Writer w;
  w.buffer().reserve(tensor_header_size(t.ndim()) + 4 * t.numel());
  w.put_raw(kMagic);
  w.put_u16(kTensorFormatVersion);
  w.put_u8(kDtypeF32);
  w.put_u8(static_cast<uint8_t>(t.ndim()));
  for (size_t d : t.dims()) w.put_u64(d);
  for (float v : t.data()) w.put_f32(v);
  return w.take();
}

Tensor decode_tensor(std::span<const uint8_t> in) {
  bytes::Reader r(in);
  r.expect_magic(kMagic);
  r.require(4, LoadErrorKind::kTruncated, "header ends early");
  const uint16_t version = r.u16();
  if (version != kTensorFormatVersion) {
    throw LoadError(LoadErrorKind::kBadVersion, "version " + std::to_string(version));
  }
  const uint8_t dtype = r.u8();
  if (dtype != kDtypeF32) {
    throw LoadError(LoadErrorKind::kBadDtype, "dtype " + std::to_string(dtype));
  }
  const uint8_t ndim = r.u8();
  if (ndim == 0) {
    throw LoadError(LoadErrorKind::kBadHeader, "ndim is 0");
  }
  r.require(8u * ndim, LoadErrorKind::kTruncated, "dims end early");
  std::vector<size_t> dims(ndim);
  uint64_t numel = 1;
  for (auto& d : dims) {
    const uint64_t v = r.u64();
    if (v == 0) throw LoadError(LoadErrorKind::kBadHeader, "zero-length dim");
    if (numel > (UINT64_MAX / 4) / v) throw LoadError(LoadErrorKind::kBadHeader, "dims overflow");
    numel *= v;
    d = static_cast<size_t>(v);
  }
  if (r.remaining() < 4 * numel) {
    throw LoadError(LoadErrorKind::kTruncated, "declared " + std::to_string(numel) + " values, found " +
                                                   std::to_string(r.remaining() / 4));
  }
  if (r.remaining() > 4 * numel) {
    throw LoadError(LoadErrorKind::kBadHeader, "trailing bytes after payload");
  }
  std::vector<float> data(numel);
  for (size_t i = 0; i < numel; ++i) {
    data[i] = r.f32();
    if (!std::isfinite(data[i])) {
      throw LoadError(LoadErrorKind::kNonFinite, "element " + std::to_string(i));
    }
  }
  return Tensor(std::move(dims), std::move(data));
}

std::vector<uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw IoError("cannot open " + path.string());
  }
  return std::vector<uint8_t>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_file(const std::filesystem::path& path, std::span<const uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw IoError("cannot open " + path.string() + " for writing");
  }
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) {
    throw IoError("write failed: " + path.string());
  }
}

Tensor load_tensor(const std::filesystem::path& path) { return decode_tensor(read_file(path)); }

void save_tensor(const Tensor& t, const std::filesystem::path& path) { write_file(path, encode_tensor(t)); }

Tensor load_tensor_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw IoError("cannot open " + path.string());
  }
  std::vector<float> values;
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos) continue;
    size_t used = 0;
    float v = 0.0f;
    try {
      v = std::stof(line.substr(first), &used);
    } catch (const std::exception&) {
      throw LoadError(LoadErrorKind::kBadHeader, path.string() + ":" + std::to_string(line_no) + ": not a number");
    }
    if (line.find_first_not_of(" \t\r", first + used) != std::string::npos) {
      throw LoadError(LoadErrorKind::kBadHeader, path.string() + ":" + std::to_string(line_no) +
                                                     ": expected one value per line");
    }
    if (!std::isfinite(v)) {
      throw LoadError(LoadErrorKind::kNonFinite, path.string() + ":" + std::to_string(line_no));
    }
    values.push_back(v);
  }
  if (values.empty()) {
    throw LoadError(LoadErrorKind::kTruncated, path.string() + " holds no values");
  }
  const size_t n = values.size();
  return Tensor({n}, std::move(values));
}

Tensor load_tensor_any(const std::filesystem::path& path) {
  return path.extension() == ".csv" ? load_tensor_csv(path) : load_tensor(path);
}

}  // namespace opal
