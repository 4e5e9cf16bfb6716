// Little-endian byte cursor helpers shared by the file formats.

#pragma once

#include <algorithm>
#include <bit>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "opal/error.hpp"

namespace opal::bytes {

class Writer {
 public:
  void put_raw(std::string_view s) { out_.insert(out_.end(), s.begin(), s.end()); }
  void put_u8(uint8_t v) { out_.push_back(v); }
  void put_u16(uint16_t v) { put_le(v, 2); }
  void put_i16(int16_t v) { put_le(static_cast<uint16_t>(v), 2); }
  void put_u32(uint32_t v) { put_le(v, 4); }
  void put_u64(uint64_t v) { put_le(v, 8); }
  void put_f32(float v) { put_u32(std::bit_cast<uint32_t>(v)); }

  std::vector<uint8_t>& buffer() { return out_; }
  std::vector<uint8_t> take() { return std::move(out_); }

 private:
  void put_le(uint64_t v, int n) {
    for (int i = 0; i < n; ++i) out_.push_back(static_cast<uint8_t>(v >> (8 * i)));
  }
  std::vector<uint8_t> out_;
};

class Reader {
 public:
  explicit Reader(std::span<const uint8_t> in) : in_(in) {}

  size_t remaining() const { return in_.size() - pos_; }
  size_t position() const { return pos_; }

  /// Throws LoadError(kind) when fewer than n bytes remain.
  void require(size_t n, LoadErrorKind kind, const char* what) const {
    if (remaining() < n) throw LoadError(kind, what);
  }
  /// Consumes `magic`. Input that ends inside a correct prefix is truncated;
  /// any mismatching byte is a bad magic.
  void expect_magic(std::string_view magic) {
    const size_t n = std::min(remaining(), magic.size());
    for (size_t i = 0; i < n; ++i) {
      if (in_[pos_ + i] != static_cast<uint8_t>(magic[i])) {
        throw LoadError(LoadErrorKind::kBadMagic, "expected \"" + std::string(magic) + "\"");
      }
    }
    require(magic.size(), LoadErrorKind::kTruncated, "file ends inside the magic");
    pos_ += magic.size();
  }
  uint8_t u8() { return static_cast<uint8_t>(get_le(1)); }
  uint16_t u16() { return static_cast<uint16_t>(get_le(2)); }
  int16_t i16() { return static_cast<int16_t>(get_le(2)); }
  uint32_t u32() { return static_cast<uint32_t>(get_le(4)); }
  uint64_t u64() { return get_le(8); }
  float f32() { return std::bit_cast<float>(u32()); }
  std::span<const uint8_t> take(size_t n) {
    auto s = in_.subspan(pos_, n);
    pos_ += n;
    return s;
  }

 private:
  uint64_t get_le(int n) {
    uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= static_cast<uint64_t>(in_[pos_ + i]) << (8 * i);
    pos_ += n;
    return v;
  }
  std::span<const uint8_t> in_;
  size_t pos_ = 0;
};

}  // namespace opal::bytes
