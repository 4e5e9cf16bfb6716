#include "opal/bf16.hpp"

#include <cmath>
#include <limits>

#include "opal/error.hpp"

namespace opal {

const char* to_string(LoadErrorKind kind) {
  switch (kind) {
    case LoadErrorKind::kBadMagic: return "bad magic";
    case LoadErrorKind::kBadVersion: return "unsupported version";
    case LoadErrorKind::kBadDtype: return "unsupported dtype";
    case LoadErrorKind::kBadHeader: return "malformed header";
    case LoadErrorKind::kTruncated: return "truncated payload";
    case LoadErrorKind::kNonFinite: return "non-finite value";
  }
  return "load error";
}

Bf16 Bf16::from_float(float value, Bf16Rounding mode) {
  const uint32_t x = std::bit_cast<uint32_t>(value);
  if (std::isnan(value)) {
    return from_bits(static_cast<uint16_t>((x >> 16) | 0x0040));
  }
  if (mode == Bf16Rounding::kTowardZero) {
    return from_bits(static_cast<uint16_t>(x >> 16));
  }
  const uint32_t rounding_bias = 0x7FFF + ((x >> 16) & 1);
  return from_bits(static_cast<uint16_t>((x + rounding_bias) >> 16));
}

Bf16 Bf16::from_double(double value, Bf16Rounding mode) {
  if (std::isnan(value)) {
    return from_bits(0x7FC0);
  }
  const bool negative = std::signbit(value);
  const uint16_t sign = negative ? 0x8000 : 0;
  const double mag = std::fabs(value);
  if (mag == 0.0) {
    return from_bits(sign);
  }
  if (std::isinf(mag)) {
    return from_bits(sign | 0x7F80);
  }
  // Quantum of the bf16 lattice around `mag`: 2^(e - 7) for normals,
  // 2^(-133) across the subnormal range.
  const int e = std::max(std::ilogb(mag), kMinExponent);
  const double quantum = std::ldexp(1.0, e - kMantissaBits);
  double units = mag / quantum;  // exact: power-of-two scaling
  if (mode == Bf16Rounding::kTowardZero) {
    units = std::trunc(units);
  } else {
    const double floor_units = std::floor(units);
    const double frac = units - floor_units;
    units = floor_units;
    if (frac > 0.5 || (frac == 0.5 && std::fmod(floor_units, 2.0) != 0.0)) {
      units += 1.0;
    }
  }
  const double rounded = units * quantum;
  if (rounded > static_cast<double>(std::numeric_limits<float>::max())) {
    return mode == Bf16Rounding::kTowardZero ? from_bits(sign | kBf16Max.bits())
                                             : from_bits(sign | 0x7F80);
  }
  // `rounded` is exactly representable in bf16, hence in float.
  return from_bits(static_cast<uint16_t>(
      (std::bit_cast<uint32_t>(static_cast<float>(rounded)) >> 16) | sign));
}

int float_exponent(float v) {
  if (v == 0.0f) {
    return Bf16::kMinExponent;
  }
  return std::max(std::ilogb(v), Bf16::kMinExponent);
}

}  // namespace opal
