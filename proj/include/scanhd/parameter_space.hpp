#pragma once

#include <array>
#include <optional>
#include <string>
#include <string_view>

#include "scanhd/error.hpp"

namespace scanhd {

inline constexpr std::size_t kParamCount = 5;
inline constexpr std::size_t kValuesPerParam = 3;

// Parameter indices in declared order.
enum Param : std::size_t {
  kSamplingFrequency = 0,
  kMeasurementRangeX = 1,
  kExposureTime = 2,
  kCmosDynamicRange = 3,
  kLightIntensityRange = 4,
};

enum class DrivingFactor { intent, observation, none };

struct ParameterDescriptor {
  std::string name;
  std::array<std::string, kValuesPerParam> values;  // ordinal order
  bool win1_eligible = true;
  DrivingFactor primary = DrivingFactor::intent;
  DrivingFactor secondary = DrivingFactor::none;

  friend bool operator==(const ParameterDescriptor&, const ParameterDescriptor&) = default;
};

class ParameterSpace {
 public:
  // The scanner's five parameters, three values each.
  static const ParameterSpace& standard() {
    static const ParameterSpace space{{{
        {"sampling_frequency", {"100Hz", "500Hz", "1kHz"}, true, DrivingFactor::intent, DrivingFactor::none},
        {"measurement_range_x", {"FULL", "1/2", "1/4"}, false, DrivingFactor::intent, DrivingFactor::observation},
        {"exposure_time", {"60us", "120us", "240us"}, true, DrivingFactor::observation, DrivingFactor::intent},
        {"cmos_dynamic_range", {"1", "5", "9"}, true, DrivingFactor::observation, DrivingFactor::intent},
        {"light_intensity_range", {"Low", "Normal", "High"}, true, DrivingFactor::observation, DrivingFactor::none},
    }}};
    return space;
  }

  explicit ParameterSpace(std::array<ParameterDescriptor, kParamCount> params) : params_(std::move(params)) {}

  [[nodiscard]] constexpr std::size_t size() const noexcept { return kParamCount; }
  [[nodiscard]] const ParameterDescriptor& operator[](std::size_t k) const { return params_.at(k); }
  [[nodiscard]] const std::array<ParameterDescriptor, kParamCount>& params() const noexcept { return params_; }

  [[nodiscard]] std::optional<std::size_t> find(std::string_view name) const noexcept {
    for (std::size_t k = 0; k < kParamCount; ++k) {
      if (params_[k].name == name) return k;
    }
    return std::nullopt;
  }

  [[nodiscard]] std::optional<std::size_t> ord(std::size_t k, std::string_view value) const noexcept {
    const auto& vals = params_[k].values;
    for (std::size_t i = 0; i < vals.size(); ++i) {
      if (vals[i] == value) return i;
    }
    return std::nullopt;
  }

  // Ordinal index, or invalid_label naming the parameter and the vocabulary.
  [[nodiscard]] std::size_t ord_or_throw(std::size_t k, std::string_view value) const {
    if (auto i = ord(k, value)) return *i;
    throw Error(ErrorCode::invalid_label, "unknown value '" + std::string(value) + "' for parameter " +
                                              params_[k].name + " (vocabulary: " + vocabulary_string(k) + ")");
  }

  [[nodiscard]] std::string vocabulary_string(std::size_t k) const {
    const auto& vals = params_[k].values;
    return "{" + vals[0] + ", " + vals[1] + ", " + vals[2] + "}";
  }

  // Intent-driven parameters are the ones whose primary factor is the instruction.
  [[nodiscard]] bool intent_driven(std::size_t k) const { return params_.at(k).primary == DrivingFactor::intent; }

  friend bool operator==(const ParameterSpace&, const ParameterSpace&) = default;

 private:
  std::array<ParameterDescriptor, kParamCount> params_;
};

// One value per parameter, in ParameterSpace order. Stored as text so that
// out-of-vocabulary values can be represented (and rejected) explicitly.
struct ParameterConfig {
  std::array<std::string, kParamCount> values;

  [[nodiscard]] const std::string& operator[](std::size_t k) const { return values.at(k); }
  [[nodiscard]] std::string& operator[](std::size_t k) { return values.at(k); }

  [[nodiscard]] bool valid_in(const ParameterSpace& space) const {
    for (std::size_t k = 0; k < kParamCount; ++k) {
      if (!space.ord(k, values[k])) return false;
    }
    return true;
  }

  friend bool operator==(const ParameterConfig&, const ParameterConfig&) = default;
  friend auto operator<=>(const ParameterConfig&, const ParameterConfig&) = default;
};

// Ordinal indices of a config; throws invalid_label on any unknown value.
inline std::array<std::size_t, kParamCount> ordinals(const ParameterSpace& space, const ParameterConfig& cfg) {
  std::array<std::size_t, kParamCount> out{};
  for (std::size_t k = 0; k < kParamCount; ++k) out[k] = space.ord_or_throw(k, cfg[k]);
  return out;
}

}  // namespace scanhd
