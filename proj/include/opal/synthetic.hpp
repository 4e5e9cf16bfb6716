#pragma once

#include <cstdint>
#include <vector>

#include "opal/tensor.hpp"

namespace opal {

enum class Distribution { kGaussian, kLogNormal };

/// Recipe for a deterministic synthetic activation tensor.
///
/// The bulk is drawn from the distribution with spread `scale` (standard
/// deviation for gaussian; log-space sigma for lognormal, with a random sign).
/// Every consecutive 128-element segment of the flattened tensor then receives
/// outliers: floor(rate * len) of them plus one more with probability equal to
/// the fractional part, at distinct uniformly chosen positions. An outlier has
/// magnitude multiplier * scale * u, u uniform in [0.75, 1.25), random sign.
struct SyntheticSpec {
  Distribution distribution = Distribution::kGaussian;
  double scale = 1.0;
  double outlier_rate = 0.0;
  double outlier_multiplier = 64.0;
  uint64_t seed = 0;
};

inline constexpr size_t kOutlierSegment = 128;

void validate(const SyntheticSpec& spec);

Tensor generate_synthetic(const SyntheticSpec& spec, std::vector<size_t> dims);

}  // namespace opal
