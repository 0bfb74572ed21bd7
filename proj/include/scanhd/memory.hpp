#pragma once

// Parameter-wise associative memories and their training rules.
//
// Adaptive single pass, for each sample h and parameter k with true value y:
//   C[k][y] += eta * (1 - cos(h, C[k][y])) * h
// Refinement, only when argmax_v cos(h, C[k][v]) = p != y:
//   C[k][y] += eta * (1 - cos(h, C[k][y])) * h
//   C[k][p] -= eta * (1 - cos(h, C[k][p])) * h
// The cosine against an all-zero accumulator is taken as 0.
//
// The naive variant bundles (C[k][y] += h) and retrains with unit steps.

#include <array>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "scanhd/embedding.hpp"
#include "scanhd/fusion.hpp"
#include "scanhd/hdc.hpp"
#include "scanhd/parameter_space.hpp"
#include "scanhd/random.hpp"

namespace scanhd {

using Scores = std::array<double, kValuesPerParam>;

struct Prediction {
  std::size_t index = 0;  // ordinal in the parameter's vocabulary
  std::string value;
  Scores scores{};
};

class ClassMemory {
 public:
  ClassMemory() = default;
  ClassMemory(std::size_t parameter, std::size_t dim) : parameter_(parameter) {
    for (auto& p : prototypes_) p.assign(dim, 0.0);
    sq_norms_.fill(0.0);
  }

  [[nodiscard]] std::size_t parameter() const noexcept { return parameter_; }
  [[nodiscard]] std::size_t dim() const noexcept { return prototypes_[0].size(); }
  [[nodiscard]] const std::vector<double>& prototype(std::size_t v) const { return prototypes_.at(v); }
  [[nodiscard]] double squared_norm(std::size_t v) const { return sq_norms_.at(v); }

  [[nodiscard]] bool trained() const noexcept {
    for (double n : sq_norms_) {
      if (n <= 0.0) return false;
    }
    return true;
  }

  // Cosine to prototype v, with 0 for an all-zero prototype.
  [[nodiscard]] double similarity(const Hypervector& h, std::size_t v) const {
    if (sq_norms_[v] <= 0.0) return 0.0;
    const double c = dot(h.values(), std::span<const double>(prototypes_[v])) /
                     (std::sqrt(static_cast<double>(h.dim())) * std::sqrt(sq_norms_[v]));
    return std::clamp(c, -1.0, 1.0);
  }

  [[nodiscard]] Scores similarities(const Hypervector& h) const {
    require(h.dim() == dim(), ErrorCode::invalid_argument,
            "query dimension " + std::to_string(h.dim()) + " does not match memory dimension " +
                std::to_string(dim()));
    Scores s{};
    for (std::size_t v = 0; v < kValuesPerParam; ++v) s[v] = similarity(h, v);
    return s;
  }

  // C[v] += coefficient * h.
  void accumulate(std::size_t v, const Hypervector& h, double coefficient) {
    auto& p = prototypes_.at(v);
    const auto hv = h.values();
    for (std::size_t i = 0; i < p.size(); ++i) p[i] += coefficient * static_cast<double>(hv[i]);
    sq_norms_[v] = scanhd::squared_norm(std::span<const double>(p));
  }

  void set_prototype(std::size_t v, std::vector<double> values) {
    prototypes_.at(v) = std::move(values);
    sq_norms_[v] = scanhd::squared_norm(std::span<const double>(prototypes_[v]));
  }

  void scale_prototype(std::size_t v, double factor) {
    for (auto& x : prototypes_.at(v)) x *= factor;
    sq_norms_[v] = scanhd::squared_norm(std::span<const double>(prototypes_[v]));
  }

  friend bool operator==(const ClassMemory& a, const ClassMemory& b) {
    return a.parameter_ == b.parameter_ && a.prototypes_ == b.prototypes_;
  }

 private:
  std::size_t parameter_ = 0;
  std::array<std::vector<double>, kValuesPerParam> prototypes_;
  std::array<double, kValuesPerParam> sq_norms_{};
};

// First index of the maximum; vocabulary order breaks ties.
inline std::size_t argmax(const Scores& s) noexcept {
  std::size_t best = 0;
  for (std::size_t v = 1; v < s.size(); ++v) {
    if (s[v] > s[best]) best = v;
  }
  return best;
}

// strict: every prototype must be trained. skip_untrained: all-zero
// prototypes (classes absent from training) are never chosen and score 0.
enum class PredictPolicy { strict, skip_untrained };

inline Prediction predict_one(const ClassMemory& mem, const Hypervector& h,
                              const ParameterSpace& space = ParameterSpace::standard(),
                              PredictPolicy policy = PredictPolicy::strict) {
  const auto& name = space[mem.parameter()].name;
  Prediction p;
  if (policy == PredictPolicy::strict) {
    require(mem.trained(), ErrorCode::untrained_memory, "memory for " + name + " has an all-zero prototype");
    p.scores = mem.similarities(h);
    p.index = argmax(p.scores);
  } else {
    p.scores = mem.similarities(h);
    std::optional<std::size_t> best;
    for (std::size_t v = 0; v < kValuesPerParam; ++v) {
      if (mem.squared_norm(v) <= 0.0) continue;
      if (!best || p.scores[v] > p.scores[*best]) best = v;
    }
    require(best.has_value(), ErrorCode::untrained_memory, "memory for " + name + " has no trained prototype");
    p.index = *best;
  }
  p.value = space[mem.parameter()].values[p.index];
  return p;
}

struct TrainingConfig {
  double eta = 0.05;
  std::size_t refine_epochs = 20;
  std::uint64_t shuffle_seed = 0;
  std::size_t early_stop_patience = 5;  // 0 disables the patience rule

  void validate() const {
    require(eta > 0.0 && std::isfinite(eta), ErrorCode::invalid_argument, "eta must be a positive finite number");
  }
};

struct TrainingMeta {
  std::string algorithm = "untrained";  // "adaptive" or "naive"
  double eta = 0.0;
  std::size_t epochs_run = 0;
  std::size_t sample_count = 0;
  std::string data_fingerprint;
  std::string split;
  std::string data_path;
  std::vector<std::size_t> refine_errors;

  friend bool operator==(const TrainingMeta&, const TrainingMeta&) = default;
};

struct LabeledHypervector {
  Hypervector hv;
  ParameterConfig labels;
};

class ScanModel {
 public:
  ScanModel(const FusionConfig& fusion, const ParameterSpace& space = ParameterSpace::standard())
      : fusion_(fusion), encoders_(fusion), space_(space) {
    for (std::size_t k = 0; k < kParamCount; ++k) memories_[k] = ClassMemory(k, fusion.hyper_dim);
  }

  [[nodiscard]] const FusionConfig& fusion() const noexcept { return fusion_; }
  [[nodiscard]] const EncoderSet& encoders() const noexcept { return encoders_; }
  [[nodiscard]] const ParameterSpace& space() const noexcept { return space_; }
  [[nodiscard]] const ClassMemory& memory(std::size_t k) const { return memories_.at(k); }
  [[nodiscard]] ClassMemory& memory(std::size_t k) { return memories_.at(k); }
  [[nodiscard]] const std::array<ClassMemory, kParamCount>& memories() const noexcept { return memories_; }
  [[nodiscard]] const TrainingMeta& meta() const noexcept { return meta_; }
  [[nodiscard]] TrainingMeta& meta() noexcept { return meta_; }
  [[nodiscard]] std::size_t hyper_dim() const noexcept { return fusion_.hyper_dim; }

  [[nodiscard]] bool same_memories(const ScanModel& other) const { return memories_ == other.memories_; }

 private:
  FusionConfig fusion_;
  EncoderSet encoders_;
  ParameterSpace space_;
  std::array<ClassMemory, kParamCount> memories_;
  TrainingMeta meta_;
};

namespace detail {

struct OrdinalSample {
  const Hypervector* hv;
  std::array<std::size_t, kParamCount> labels;
};

inline std::vector<OrdinalSample> ordinal_samples(const ScanModel& model, std::span<const LabeledHypervector> samples) {
  std::vector<OrdinalSample> out;
  out.reserve(samples.size());
  for (const auto& s : samples) {
    require(s.hv.dim() == model.hyper_dim(), ErrorCode::invalid_argument,
            "sample dimension " + std::to_string(s.hv.dim()) + " does not match model dimension " +
                std::to_string(model.hyper_dim()));
    out.push_back({&s.hv, ordinals(model.space(), s.labels)});
  }
  return out;
}

inline std::uint64_t epoch_seed(std::uint64_t shuffle_seed, std::size_t epoch) {
  return substream_seed(shuffle_seed + epoch, "refine");
}

// One error-driven pass. The step function maps the pre-update cosine to the
// coefficient applied to h. Returns the number of (sample, parameter) errors.
template <class StepFn>
std::size_t refine_epoch(ScanModel& model, const std::vector<OrdinalSample>& samples,
                         const std::vector<std::size_t>& order, StepFn step) {
  std::size_t errors = 0;
  for (std::size_t i : order) {
    const auto& s = samples[i];
    for (std::size_t k = 0; k < kParamCount; ++k) {
      auto& mem = model.memory(k);
      const Scores scores = mem.similarities(*s.hv);
      const std::size_t predicted = argmax(scores);
      const std::size_t truth = s.labels[k];
      if (predicted == truth) continue;
      ++errors;
      mem.accumulate(truth, *s.hv, step(scores[truth]));
      mem.accumulate(predicted, *s.hv, -step(scores[predicted]));
    }
  }
  return errors;
}

template <class StepFn>
std::vector<std::size_t> refine_loop(ScanModel& model, const std::vector<OrdinalSample>& samples,
                                     const TrainingConfig& cfg, StepFn step) {
  std::vector<std::size_t> trajectory;
  std::optional<std::size_t> best;
  std::size_t stale = 0;
  for (std::size_t epoch = 0; epoch < cfg.refine_epochs; ++epoch) {
    const auto order = shuffled_indices(samples.size(), epoch_seed(cfg.shuffle_seed, epoch));
    const std::size_t errors = refine_epoch(model, samples, order, step);
    trajectory.push_back(errors);
    if (errors == 0) break;
    if (!best || errors < *best) {
      best = errors;
      stale = 0;
    } else if (cfg.early_stop_patience > 0 && ++stale >= cfg.early_stop_patience) {
      break;
    }
  }
  return trajectory;
}

}  // namespace detail

// One shuffled pass of novelty-weighted bundling into the true class.
inline ScanModel train_single_pass(ScanModel model, std::span<const LabeledHypervector> samples,
                                   const TrainingConfig& cfg) {
  cfg.validate();
  const auto ordinal = detail::ordinal_samples(model, samples);
  const auto order = shuffled_indices(ordinal.size(), substream_seed(cfg.shuffle_seed, "single-pass"));
  for (std::size_t i : order) {
    const auto& s = ordinal[i];
    for (std::size_t k = 0; k < kParamCount; ++k) {
      auto& mem = model.memory(k);
      const std::size_t y = s.labels[k];
      mem.accumulate(y, *s.hv, cfg.eta * (1.0 - mem.similarity(*s.hv, y)));
    }
  }
  auto& meta = model.meta();
  meta.algorithm = "adaptive";
  meta.eta = cfg.eta;
  meta.sample_count = samples.size();
  return model;
}

struct RefineResult {
  ScanModel model;
  std::vector<std::size_t> errors_per_epoch;
};

inline RefineResult refine(ScanModel model, std::span<const LabeledHypervector> samples, const TrainingConfig& cfg) {
  cfg.validate();
  const auto ordinal = detail::ordinal_samples(model, samples);
  const double eta = cfg.eta;
  auto trajectory = detail::refine_loop(model, ordinal, cfg, [eta](double sim) { return eta * (1.0 - sim); });
  model.meta().epochs_run += trajectory.size();
  model.meta().refine_errors = trajectory;
  return {std::move(model), std::move(trajectory)};
}

// Plain bundling followed by unit-step retraining for cfg.refine_epochs.
inline RefineResult train_naive(ScanModel model, std::span<const LabeledHypervector> samples,
                                const TrainingConfig& cfg) {
  const auto ordinal = detail::ordinal_samples(model, samples);
  for (const auto& s : ordinal) {
    for (std::size_t k = 0; k < kParamCount; ++k) model.memory(k).accumulate(s.labels[k], *s.hv, 1.0);
  }
  auto trajectory = detail::refine_loop(model, ordinal, cfg, [](double) { return 1.0; });
  auto& meta = model.meta();
  meta.algorithm = "naive";
  meta.eta = 1.0;
  meta.sample_count = samples.size();
  meta.epochs_run = trajectory.size();
  meta.refine_errors = trajectory;
  return {std::move(model), std::move(trajectory)};
}

// Single pass followed by refinement: the standard training recipe.
inline RefineResult train_adaptive(ScanModel model, std::span<const LabeledHypervector> samples,
                                   const TrainingConfig& cfg) {
  return refine(train_single_pass(std::move(model), samples, cfg), samples, cfg);
}

struct Recommendation {
  ParameterConfig config;
  std::array<Scores, kParamCount> confidences{};
};

inline Recommendation recommend_hv(const ScanModel& model, const Hypervector& h,
                                   PredictPolicy policy = PredictPolicy::strict) {
  Recommendation r;
  for (std::size_t k = 0; k < kParamCount; ++k) {
    auto p = predict_one(model.memory(k), h, model.space(), policy);
    r.config[k] = std::move(p.value);
    r.confidences[k] = p.scores;
  }
  return r;
}

// Embeddings the model does not consume are ignored; missing required ones
// raise invalid_argument.
inline Recommendation recommend(const ScanModel& model, const Embedding* observation, const Embedding* instruction,
                                PredictPolicy policy = PredictPolicy::strict) {
  const auto mode = model.fusion().modalities;
  if (mode != ModalityMode::instruction_only) {
    require(observation != nullptr, ErrorCode::invalid_argument, "this model requires an observation embedding");
  }
  if (mode != ModalityMode::observation_only) {
    require(instruction != nullptr, ErrorCode::invalid_argument, "this model requires an instruction embedding");
  }
  const Embedding* eo = mode == ModalityMode::instruction_only ? nullptr : observation;
  const Embedding* et = mode == ModalityMode::observation_only ? nullptr : instruction;
  return recommend_hv(model, fuse(eo, et, model.fusion(), model.encoders()), policy);
}

inline Recommendation recommend(const ScanModel& model, const std::optional<Embedding>& observation,
                                const std::optional<Embedding>& instruction,
                                PredictPolicy policy = PredictPolicy::strict) {
  return recommend(model, observation ? &*observation : nullptr, instruction ? &*instruction : nullptr, policy);
}

}  // namespace scanhd
