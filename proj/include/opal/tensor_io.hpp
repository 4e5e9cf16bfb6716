// Binary tensor file ("OPTN"), all fields little-endian:
//
//   offset  size        field
//   0       4           magic "OPTN"
//   4       2           version (u16) = 1
//   6       1           dtype (u8) = 0, IEEE-754 single precision
//   7       1           ndim (u8), >= 1
//   8       8 * ndim    dims (u64 each, positive)
//   ...     4 * numel   payload, row-major
//
// Trailing bytes after the payload are rejected as a malformed header.

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "opal/tensor.hpp"

namespace opal {

inline constexpr uint16_t kTensorFormatVersion = 1;

size_t tensor_header_size(size_t ndim);

std::vector<uint8_t> encode_tensor(const Tensor& t);
/// Throws LoadError with a distinct kind per failure mode.
Tensor decode_tensor(std::span<const uint8_t> bytes);

Tensor load_tensor(const std::filesystem::path& path);
void save_tensor(const Tensor& t, const std::filesystem::path& path);

/// One value per line (blank lines ignored) into a 1-D tensor.
Tensor load_tensor_csv(const std::filesystem::path& path);

/// Dispatches on extension: ".csv" uses the CSV reader, anything else the binary format.
Tensor load_tensor_any(const std::filesystem::path& path);

std::vector<uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const uint8_t> bytes);

}  // namespace opal
