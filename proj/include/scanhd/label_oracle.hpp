#pragma once

// Deterministic labeling rules standing in for expert-calibrated labels.
// Intent drives sampling frequency and X range; the observation (surface
// reflectivity, scene brightness) drives exposure, CMOS dynamic range and
// light intensity, with fine-detail intents asking for one longer exposure
// step.

#include <algorithm>

#include "scanhd/dataset.hpp"
#include "scanhd/parameter_space.hpp"

namespace scanhd {

inline constexpr double kLowerThird = 1.0 / 3.0;
inline constexpr double kUpperThird = 2.0 / 3.0;

// Brightness lost by the scene under each lighting condition.
constexpr double lighting_brightness_offset(Lighting l) noexcept {
  switch (l) {
    case Lighting::full: return 0.0;
    case Lighting::side: return 0.15;
    case Lighting::dark: return 0.3;
  }
  return 0.0;
}

inline double effective_brightness(double base, Lighting l) {
  return std::clamp(base - lighting_brightness_offset(l), 0.0, 1.0);
}

inline ParameterConfig label_oracle(const SlotTuple& slot, double reflectivity, double brightness) {
  require(reflectivity >= 0.0 && reflectivity <= 1.0 && brightness >= 0.0 && brightness <= 1.0,
          ErrorCode::invalid_argument, "latents must lie in [0, 1]");
  const auto& space = ParameterSpace::standard();
  ParameterConfig cfg;

  switch (slot.detail) {
    case Detail::outline: cfg[kSamplingFrequency] = "100Hz"; break;
    case Detail::metrology: cfg[kSamplingFrequency] = "500Hz"; break;
    case Detail::detail: cfg[kSamplingFrequency] = "1kHz"; break;
  }

  if (slot.coverage == Coverage::global) {
    cfg[kMeasurementRangeX] = "FULL";
  } else {
    cfg[kMeasurementRangeX] = slot.detail == Detail::detail ? "1/4" : "1/2";
  }

  std::size_t exposure = brightness < kLowerThird ? 2 : (brightness < kUpperThird ? 1 : 0);
  if (slot.detail == Detail::detail) exposure = std::min<std::size_t>(exposure + 1, 2);
  cfg[kExposureTime] = space[kExposureTime].values[exposure];

  const std::size_t cmos = reflectivity < kLowerThird ? 0 : (reflectivity < kUpperThird ? 1 : 2);
  cfg[kCmosDynamicRange] = space[kCmosDynamicRange].values[cmos];

  const std::size_t light = reflectivity >= kUpperThird ? 0 : (reflectivity >= kLowerThird ? 1 : 2);
  cfg[kLightIntensityRange] = space[kLightIntensityRange].values[light];
  return cfg;
}

// Labels for an instance from its generator latents, lighting included.
inline ParameterConfig label_oracle(const Instance& x) {
  require(x.latent.has_value(), ErrorCode::invalid_argument, "instance '" + x.id + "' carries no latents");
  return label_oracle(x.slot, x.latent->reflectivity, effective_brightness(x.latent->brightness, x.condition.lighting));
}

}  // namespace scanhd
