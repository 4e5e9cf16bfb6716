// Serialized QuantizedTensor ("OPQT"), little-endian:
//
//   magic "OPQT"
//   k, n, b            u16 each
//   global_scale_exp   i16
//   ndim               u8, then dims as u64 x ndim
//   per block (row-major, ceil(inner / k) blocks per row):
//     offset           u8, low 4 bits used
//     codes            k codes of b bits, two's complement, packed LSB-first
//                      into ceil(k * b / 8) bytes
//     outliers         n x (index u8, bfloat16 bits u16)
//
// The u8 outlier index limits k to 256.

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "opal/mx_quant.hpp"

namespace opal {

inline constexpr size_t kMaxSerializedBlock = 256;

std::vector<uint8_t> encode_quantized(const QuantizedTensor& q);
QuantizedTensor decode_quantized(std::span<const uint8_t> bytes);

void save_quantized(const QuantizedTensor& q, const std::filesystem::path& path);
QuantizedTensor load_quantized(const std::filesystem::path& path);

/// Packs signed b-bit codes LSB-first.
std::vector<uint8_t> pack_codes(std::span<const int32_t> codes, int b);
std::vector<int32_t> unpack_codes(std::span<const uint8_t> packed, size_t count, int b);

}  // namespace opal
