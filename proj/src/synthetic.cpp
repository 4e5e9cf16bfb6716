#include "opal/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "opal/error.hpp"
#include "opal/rng.hpp"

namespace opal {

void validate(const SyntheticSpec& spec) {
  if (!(spec.outlier_rate >= 0.0 && spec.outlier_rate <= 1.0)) {
    throw ConfigError("outlier rate must lie in [0, 1], got " + std::to_string(spec.outlier_rate));
  }
  if (!(spec.outlier_multiplier >= 1.0) || !std::isfinite(spec.outlier_multiplier)) {
    throw ConfigError("outlier multiplier must be >= 1, got " + std::to_string(spec.outlier_multiplier));
  }
  if (!(spec.scale > 0.0) || !std::isfinite(spec.scale)) {
    throw ConfigError("scale must be positive and finite, got " + std::to_string(spec.scale));
  }
}

Tensor generate_synthetic(const SyntheticSpec& spec, std::vector<size_t> dims) {
  validate(spec);
  Tensor t(std::move(dims));
  Rng rng(spec.seed);
  auto data = t.data();

  for (float& v : data) {
    if (spec.distribution == Distribution::kGaussian) {
      v = static_cast<float>(spec.scale * rng.normal());
    } else {
      const double mag = std::exp(spec.scale * rng.normal());
      v = static_cast<float>(rng.uniform() < 0.5 ? -mag : mag);
    }
  }

  if (spec.outlier_rate == 0.0) {
    return t;
  }
  std::vector<size_t> slots(kOutlierSegment);
  for (size_t base = 0; base < data.size(); base += kOutlierSegment) {
    const size_t len = std::min(kOutlierSegment, data.size() - base);
    const double expected = spec.outlier_rate * static_cast<double>(len);
    size_t count = static_cast<size_t>(std::floor(expected));
    if (rng.uniform() < expected - std::floor(expected)) ++count;
    count = std::min(count, len);

    // Partial Fisher-Yates over the segment positions.
    std::iota(slots.begin(), slots.begin() + len, size_t{0});
    for (size_t i = 0; i < count; ++i) {
      const size_t j = i + rng.below(len - i);
      std::swap(slots[i], slots[j]);
      const double mag = spec.outlier_multiplier * spec.scale * (0.75 + 0.5 * rng.uniform());
      data[base + slots[i]] = static_cast<float>(rng.uniform() < 0.5 ? -mag : mag);
    }
  }
  return t;
}

}  // namespace opal
