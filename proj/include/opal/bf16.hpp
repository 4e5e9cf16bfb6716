// bfloat16 storage type: 1 sign bit, 8 exponent bits (bias 127), 7 stored
// mantissa bits. Conversions from wider types round to nearest, ties to even,
// unless a rounding mode is given explicitly.

#pragma once

#include <bit>
#include <cstdint>

namespace opal {

enum class Bf16Rounding { kNearestEven, kTowardZero };

class Bf16 {
 public:
  static constexpr int kBias = 127;
  static constexpr int kMantissaBits = 7;
  /// Unbiased exponent assigned to zeros and subnormals.
  static constexpr int kMinExponent = -126;

  constexpr Bf16() = default;

  static constexpr Bf16 from_bits(uint16_t bits) {
    Bf16 v;
    v.bits_ = bits;
    return v;
  }
  static Bf16 from_float(float value, Bf16Rounding mode = Bf16Rounding::kNearestEven);
  /// Single rounding step from double (no intermediate float rounding).
  static Bf16 from_double(double value, Bf16Rounding mode = Bf16Rounding::kNearestEven);

  constexpr uint16_t bits() const { return bits_; }
  float to_float() const { return std::bit_cast<float>(static_cast<uint32_t>(bits_) << 16); }

  constexpr bool sign() const { return (bits_ >> 15) != 0; }
  constexpr int biased_exponent() const { return (bits_ >> 7) & 0xFF; }
  constexpr int mantissa() const { return bits_ & 0x7F; }
  constexpr bool is_finite() const { return biased_exponent() != 0xFF; }
  constexpr bool is_zero() const { return (bits_ & 0x7FFF) == 0; }

  /// Unbiased exponent; zeros and subnormals report kMinExponent.
  constexpr int exponent() const {
    const int e = biased_exponent();
    return e == 0 ? kMinExponent : e - kBias;
  }

  friend constexpr bool operator==(Bf16 a, Bf16 b) { return a.bits_ == b.bits_; }

 private:
  uint16_t bits_ = 0;
};

/// Largest finite bfloat16 magnitude, 0x7F7F.
inline constexpr Bf16 kBf16Max = Bf16::from_bits(0x7F7F);

/// Round a float through bfloat16 and back.
inline float round_bf16(float v, Bf16Rounding mode = Bf16Rounding::kNearestEven) {
  return Bf16::from_float(v, mode).to_float();
}

/// Unbiased exponent of a finite float, with zeros and subnormals reported as
/// the minimum normal exponent (-126).
int float_exponent(float v);

}  // namespace opal
